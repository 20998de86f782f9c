"""
Deliberately naive reference implementations for differential testing.

Nothing here imports the main implementation; each oracle re-derives its
inputs from plain box lists so that a shared bug cannot hide.
"""

from .ranking import OracleTooLarge, oracle_ap, oracle_mr
from .eg_nms import oracle_eg_nms

__all__ = ["OracleTooLarge", "oracle_ap", "oracle_mr", "oracle_eg_nms"]
