"""Protocol state machines producing :class:`SessionRecord` transcripts."""
from .bb84 import bb84_decision, replay_bb84, run_bb84, sift_bb84
from .entangled import Agm06Settings, E91Settings, run_agm06, run_e91
from .record import NO_BIT, SessionRecord, key_statistics
from .sarg04 import Sarg04Announcement, run_sarg04, sarg04_conclusive

__all__ = [
    "Agm06Settings",
    "E91Settings",
    "NO_BIT",
    "Sarg04Announcement",
    "SessionRecord",
    "bb84_decision",
    "key_statistics",
    "replay_bb84",
    "run_agm06",
    "run_bb84",
    "run_e91",
    "run_sarg04",
    "sarg04_conclusive",
    "sift_bb84",
]
