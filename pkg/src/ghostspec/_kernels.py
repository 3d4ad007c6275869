"""Compiled per-gate detector state machine."""

import numpy as np
from numba import njit

NONE = 0
PAIR = 1
DARK = 2
AFTERPULSE = 3


@njit(cache=True, nogil=True)
def scan_detector(pair_id, pair_pix, dark_pix, ap_u, p_ap, dead_gates, state, offset):
    """Resolve one detector over a block of consecutive gates.

    Candidates per gate, in priority order: a pair photon (``pair_id >= 0``), a
    pending afterpulse, a dark count (``dark_pix >= 0``). A click makes the
    detector blind for ``dead_gates`` further gates and, with probability
    ``p_ap``, schedules an afterpulse in the first gate after the dead period.

    ``state`` = [dead_until, pending_gate, pending_pix] in absolute gate numbers;
    it is updated in place so consecutive blocks chain exactly.
    """
    n = pair_id.shape[0]
    cause = np.zeros(n, np.int8)
    pix = np.full(n, -1, np.int32)
    dead_until = state[0]
    pending = state[1]
    pending_pix = state[2]
    for g in range(n):
        t = offset + g
        if t <= dead_until:
            if pending == t:
                pending = -1
            continue
        c = NONE
        p = -1
        if pair_id[g] >= 0:
            c = PAIR
            p = pair_pix[g]
        elif pending == t:
            c = AFTERPULSE
            p = pending_pix
        elif dark_pix[g] >= 0:
            c = DARK
            p = dark_pix[g]
        if pending == t:
            pending = -1
        if c != NONE:
            cause[g] = c
            pix[g] = p
            dead_until = t + dead_gates
            if p_ap > 0.0 and ap_u[g] < p_ap:
                pending = t + dead_gates + 1
                pending_pix = p
    state[0] = dead_until
    state[1] = pending
    state[2] = pending_pix
    return cause, pix
