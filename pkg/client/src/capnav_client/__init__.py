"""Client SDK for the capnav environment server."""

from capnav_client.client import (
    BadActionError,
    EnvClient,
    EnvError,
    EpisodeDoneError,
    NoEpisodeError,
    Observation,
    UnknownSceneError,
    VersionError,
    connect,
)

__version__ = "0.1.0"

__all__ = [
    "BadActionError",
    "EnvClient",
    "EnvError",
    "EpisodeDoneError",
    "NoEpisodeError",
    "Observation",
    "UnknownSceneError",
    "VersionError",
    "connect",
]
