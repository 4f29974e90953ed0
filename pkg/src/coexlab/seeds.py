"""Deterministic 64-bit seed derivation (splitmix64 finalizer).

Every random stream in the package descends from a single base seed via
this counter-style mix, so any run is a pure function of its seed and no
stream ordering ever depends on scheduling.
"""

_MASK = (1 << 64) - 1
_PHI = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB


def _mix(z):
    z &= _MASK
    z = ((z ^ (z >> 30)) * _MIX1) & _MASK
    z = ((z ^ (z >> 27)) * _MIX2) & _MASK
    return z ^ (z >> 31)


def derive_seed(base, *parts):
    """Mix a base seed with any number of integer or string parts.

    Strings fold byte-wise and close with a length tag, so part
    boundaries matter: ("ab") and ("a", "b") derive different seeds.
    """
    state = base & _MASK
    for part in parts:
        if isinstance(part, str):
            data = part.encode("utf-8")
            for byte in data:
                state = _mix((state + _PHI + byte) & _MASK)
            state = _mix((state + _PHI + len(data) + 1) & _MASK)
        else:
            state = _mix((state + _PHI + (int(part) & _MASK)) & _MASK)
    return _mix((state + _PHI) & _MASK)
