from .config import RoundConfig, required_users, threshold_violations
from .messages import SERVER, DistanceReport, MessageKind, Network, Phase, RoundMessage
from .parties import Attack, ByzantineBehavior, ByzantineUser, Server, User
from .round import RoundOutcome, run_round

__all__ = [
    "Attack",
    "ByzantineBehavior",
    "ByzantineUser",
    "DistanceReport",
    "MessageKind",
    "Network",
    "Phase",
    "RoundConfig",
    "RoundMessage",
    "RoundOutcome",
    "SERVER",
    "Server",
    "User",
    "required_users",
    "run_round",
    "threshold_violations",
]
