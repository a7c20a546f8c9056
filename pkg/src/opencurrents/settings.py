"""Process-wide numerical settings.

``dense_hilbert_max`` is the Hilbert-space dimension up to which Liouvillians
are stored and factorized densely; a generator of Liouville dimension ``n`` is
dense when ``n <= dense_hilbert_max**2``.
"""
from __future__ import annotations

import contextlib
import threading
from dataclasses import dataclass, fields


@dataclass
class Settings:
    dense_hilbert_max: int = 64
    krylov_tol: float = 1e-10
    krylov_maxdim: int = 50
    degeneracy_tol: float = 1e-8
    max_sites: int = 9

    @property
    def dense_liouville_max(self) -> int:
        return self.dense_hilbert_max**2


settings = Settings()
_lock = threading.Lock()


@contextlib.contextmanager
def override(**values):
    """Temporarily change settings, e.g. ``with override(dense_hilbert_max=2):``."""
    names = {f.name for f in fields(Settings)}
    unknown = set(values) - names
    if unknown:
        raise KeyError(f"unknown settings: {sorted(unknown)}")
    with _lock:
        old = {k: getattr(settings, k) for k in values}
        for k, v in values.items():
            setattr(settings, k, v)
    try:
        yield settings
    finally:
        with _lock:
            for k, v in old.items():
                setattr(settings, k, v)
