"""Python bindings for the orts C++ core."""

from ._orts import (
    CapabilityError,
    OrtsError,
    ProtocolError,
    TransportError,
    box_iou,
    decode_classify_response,
    decode_detect_response,
    decode_request,
    dist_cls_preserving,
    dist_cls_removing,
    dist_det_preserving,
    dist_det_removing,
    encode_classify_response,
    encode_detect_response,
    inpaint,
    make_fixtures,
    mask_iou,
    median_filter,
    mutate,
    operation_ids,
    operation_weights,
    rank_of,
    report_to_csv,
)

__version__ = "0.1.0"
