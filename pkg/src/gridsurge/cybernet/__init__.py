"""Emulated SCADA layer: the frame codec plus links with their attack hooks."""

from gridsurge.cybernet.codec import (
    Command,
    Frame,
    Function,
    crc16_dnp,
    decode_frame,
    encode_frame,
)
from gridsurge.cybernet.network import (
    CyberNetwork,
    CyberTopology,
    Delivery,
    FixedDelay,
    Flood,
    LinkParams,
    MitmRule,
    Node,
    TraceRecord,
    Window,
    link_name,
)

__all__ = [
    "Command",
    "CyberNetwork",
    "CyberTopology",
    "Delivery",
    "FixedDelay",
    "Flood",
    "Frame",
    "Function",
    "LinkParams",
    "MitmRule",
    "Node",
    "TraceRecord",
    "Window",
    "crc16_dnp",
    "decode_frame",
    "encode_frame",
    "link_name",
]
