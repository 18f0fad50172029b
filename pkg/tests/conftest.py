from functools import lru_cache

from tanaka.derivations import prolong


@lru_cache(maxsize=None)
def cached_state(sig, depth):
    """Prolongation states are immutable once built; share them across tests."""
    return prolong(sig, depth)
