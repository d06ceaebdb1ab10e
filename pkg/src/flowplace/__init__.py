"""Cell-flow GNN global placement: hierarchy, relative-position codec, GNN, fine-tuning."""

from .codec import RelEncoding, decode, encode
from .netlist import Netlist, NetlistError, Placement

__all__ = ["Netlist", "NetlistError", "Placement", "RelEncoding", "encode", "decode"]
__version__ = "0.1.0"
