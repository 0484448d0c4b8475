"""On-disk store of user content preferences and audio catalog records.

The store is one JSON document::

    {"schema_version": 1,
     "categories": ["music", "sport", "news"],
     "users": {"u1": {"preferred_categories": ["sport"], "version": 1}},
     "audio": {"a1": {"category": "sport", "media_len": 60.0,
                      "codec": "AAC-LC", "bitrate": 576.0, "version": 1}}}

Writes go through a temp file and ``os.replace`` under an exclusive
``fcntl`` lock on a sidecar ``.lock`` file, so readers never observe a
partially written document and concurrent writers are serialized.
"""
from __future__ import annotations

import contextlib
import fcntl
import json
import math
import os
import tempfile
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator

from .errors import AudioNotFoundError, ConfigError, InvalidInputError, UserNotFoundError
from .model import normalize_category

SCHEMA_VERSION = 1

# The listening-test corpus used music/sport/news; the server-side example
# algorithm used sport/documentary/news.
CATEGORY_PRESETS = {
    "corpus": ("music", "sport", "news"),
    "catalog": ("sport", "documentary", "news"),
}
DEFAULT_CATEGORIES = CATEGORY_PRESETS["corpus"]


@dataclass(frozen=True)
class UserProfile:
    user_id: str
    preferred_categories: frozenset[str] = frozenset()

    def __post_init__(self):
        object.__setattr__(self, "user_id", str(self.user_id))
        object.__setattr__(self, "preferred_categories",
                           frozenset(normalize_category(c) for c in self.preferred_categories))


@dataclass(frozen=True)
class AudioRecord:
    audio_id: str
    category: str
    media_len: float
    codec: str
    bitrate: float

    def __post_init__(self):
        if not isinstance(self.category, str):
            raise InvalidInputError(
                f"audio {self.audio_id!r}: exactly one category is required, got {self.category!r}")
        object.__setattr__(self, "category", normalize_category(self.category))
        for name in ("media_len", "bitrate"):
            value = float(getattr(self, name))
            if not (math.isfinite(value) and value > 0):
                raise InvalidInputError(f"audio {self.audio_id!r}: {name} must be positive")
            object.__setattr__(self, name, value)


class PreferenceStore:
    def __init__(self, path: str | os.PathLike, categories: Iterable[str] | None = None):
        self.path = Path(path)
        self._lock_path = self.path.with_name(self.path.name + ".lock")
        self._categories = None if categories is None else tuple(normalize_category(c) for c in categories)

    # -- document plumbing -------------------------------------------------

    def _empty(self) -> dict:
        return {"schema_version": SCHEMA_VERSION,
                "categories": list(self._categories or DEFAULT_CATEGORIES),
                "users": {}, "audio": {}}

    def _read(self) -> dict:
        try:
            text = self.path.read_text(encoding="utf-8")
        except FileNotFoundError:
            return self._empty()
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{self.path}: corrupt preference store ({exc})") from None
        _check_document(doc, self.path)
        return doc

    def _write(self, doc: dict) -> None:
        self.path.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(prefix=self.path.name + ".", suffix=".tmp", dir=self.path.parent)
        try:
            with os.fdopen(fd, "w", encoding="utf-8") as fh:
                json.dump(doc, fh, indent=2, sort_keys=True)
                fh.write("\n")
                fh.flush()
                os.fsync(fh.fileno())
            os.replace(tmp, self.path)
        except BaseException:
            with contextlib.suppress(FileNotFoundError):
                os.unlink(tmp)
            raise

    @contextlib.contextmanager
    def _locked(self, exclusive: bool) -> Iterator[None]:
        self._lock_path.parent.mkdir(parents=True, exist_ok=True)
        with open(self._lock_path, "a") as lock:
            fcntl.flock(lock, fcntl.LOCK_EX if exclusive else fcntl.LOCK_SH)
            try:
                yield
            finally:
                fcntl.flock(lock, fcntl.LOCK_UN)

    def _load(self) -> dict:
        with self._locked(exclusive=False):
            return self._read()

    # -- public API --------------------------------------------------------

    @property
    def categories(self) -> tuple[str, ...]:
        return tuple(self._load()["categories"])

    def _check_category(self, doc: dict, category: str) -> None:
        if category not in doc["categories"]:
            raise ConfigError(
                f"category {category!r} not in store vocabulary {doc['categories']}")

    def upsert_profile(self, profile: UserProfile) -> int:
        """Insert or replace a user profile; returns the stored version number."""
        with self._locked(exclusive=True):
            doc = self._read()
            for c in profile.preferred_categories:
                self._check_category(doc, c)
            version = doc["users"].get(profile.user_id, {}).get("version", 0) + 1
            doc["users"][profile.user_id] = {
                "preferred_categories": sorted(profile.preferred_categories), "version": version}
            self._write(doc)
        return version

    def get_profile(self, user_id: str) -> UserProfile:
        entry = self._load()["users"].get(str(user_id))
        if entry is None:
            raise UserNotFoundError(f"user {user_id!r} not found")
        return UserProfile(user_id, entry["preferred_categories"])

    def upsert_audio(self, record: AudioRecord) -> int:
        with self._locked(exclusive=True):
            doc = self._read()
            self._check_category(doc, record.category)
            version = doc["audio"].get(record.audio_id, {}).get("version", 0) + 1
            doc["audio"][record.audio_id] = {
                "category": record.category, "media_len": record.media_len,
                "codec": record.codec, "bitrate": record.bitrate, "version": version}
            self._write(doc)
        return version

    def get_audio(self, audio_id: str) -> AudioRecord:
        entry = self._load()["audio"].get(str(audio_id))
        if entry is None:
            raise AudioNotFoundError(f"audio {audio_id!r} not found")
        return AudioRecord(str(audio_id), entry["category"], entry["media_len"],
                           entry["codec"], entry["bitrate"])

    def has_preference(self, user_id: str, audio_id: str) -> bool:
        doc = self._load()
        user = doc["users"].get(str(user_id))
        if user is None:
            raise UserNotFoundError(f"user {user_id!r} not found")
        audio = doc["audio"].get(str(audio_id))
        if audio is None:
            raise AudioNotFoundError(f"audio {audio_id!r} not found")
        return audio["category"] in user["preferred_categories"]

    def export(self) -> dict:
        return self._load()

    def import_document(self, doc: dict) -> None:
        """Replace the whole store with ``doc`` (same schema as :meth:`export`)."""
        _check_document(doc, "<import>")
        with self._locked(exclusive=True):
            self._write(doc)


def _check_document(doc, where) -> None:
    if not isinstance(doc, dict):
        raise ConfigError(f"{where}: store document must be a JSON object")
    version = doc.get("schema_version")
    if version != SCHEMA_VERSION:
        raise ConfigError(f"{where}: unsupported schema_version {version!r}")
    for key in ("categories", "users", "audio"):
        if key not in doc:
            raise ConfigError(f"{where}: store document missing {key!r}")
    cats = doc["categories"]
    for entry in doc["users"].values():
        if not set(entry.get("preferred_categories", ())) <= set(cats):
            raise ConfigError(f"{where}: user preference outside category vocabulary")
    for audio_id, entry in doc["audio"].items():
        if not isinstance(entry.get("category"), str) or entry["category"] not in cats:
            raise ConfigError(f"{where}: audio {audio_id!r} must have exactly one known category")
