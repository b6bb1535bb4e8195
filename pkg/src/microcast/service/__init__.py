from microcast.service.core import ForecastService, ServiceError
from microcast.service.store import ForecastStore, ForecastStoreEntry, ReadingStore, SegmentLog

__all__ = ["ForecastService", "ServiceError", "ForecastStore", "ForecastStoreEntry", "ReadingStore", "SegmentLog"]
