"""UE- and eNB-side receiver algorithms."""
from nbiot.receiver.data import (decode_npdsch, decode_npdsch_grids, decode_npusch,
                                 decode_npusch_slots)
from nbiot.receiver.npbch import AcquisitionError, NpbchResult, npbch_acquire
from nbiot.receiver.nprach import NprachDetection, nprach_detect
from nbiot.receiver.sync import (AccumulatorState, SyncError, SyncResult, calibrate_threshold,
                                 cell_search, estimate_cfo, npss_search, nsss_detect)

__all__ = [
    "AccumulatorState", "AcquisitionError", "NpbchResult", "NprachDetection", "SyncError", "SyncResult",
    "calibrate_threshold", "cell_search", "decode_npdsch", "decode_npdsch_grids",
    "decode_npusch", "decode_npusch_slots", "estimate_cfo", "npbch_acquire", "nprach_detect", "npss_search",
    "nsss_detect",
]
