"""Suffix array construction by induced sorting (SA-IS).

The per-level passes are numba kernels; recursion on the reduced string
happens in Python, which keeps the kernels simple and monomorphic.
"""

from __future__ import annotations

import numpy as np
from numba import njit


@njit(cache=True, nogil=True)
def _classify(s, upper):
    n = len(s)
    ls = np.zeros(n, dtype=np.bool_)
    for i in range(n - 2, -1, -1):
        if s[i] == s[i + 1]:
            ls[i] = ls[i + 1]
        else:
            ls[i] = s[i] < s[i + 1]
    sum_l = np.zeros(upper + 2, dtype=np.int64)
    sum_s = np.zeros(upper + 2, dtype=np.int64)
    for i in range(n):
        if not ls[i]:
            sum_s[s[i]] += 1
        else:
            sum_l[s[i] + 1] += 1
    for i in range(upper + 1):
        sum_s[i] += sum_l[i]
        if i < upper:
            sum_l[i + 1] += sum_s[i]
    return ls, sum_l, sum_s


@njit(cache=True, nogil=True)
def _induce(s, ls, sum_l, sum_s, lms, sa):
    n = len(s)
    for i in range(n):
        sa[i] = -1
    buf = sum_s.copy()
    for k in range(len(lms)):
        d = lms[k]
        if d == n:
            continue
        sa[buf[s[d]]] = d
        buf[s[d]] += 1
    buf = sum_l.copy()
    sa[buf[s[n - 1]]] = n - 1
    buf[s[n - 1]] += 1
    for i in range(n):
        v = sa[i]
        if v >= 1 and not ls[v - 1]:
            sa[buf[s[v - 1]]] = v - 1
            buf[s[v - 1]] += 1
    buf = sum_l.copy()
    for i in range(n - 1, -1, -1):
        v = sa[i]
        if v >= 1 and ls[v - 1]:
            buf[s[v - 1] + 1] -= 1
            sa[buf[s[v - 1] + 1]] = v - 1


@njit(cache=True, nogil=True)
def _lms_positions(ls, idx_dtype_probe):
    n = len(ls)
    lms_map = np.full(n + 1, -1, dtype=idx_dtype_probe.dtype)
    m = 0
    for i in range(1, n):
        if not ls[i - 1] and ls[i]:
            lms_map[i] = m
            m += 1
    lms = np.empty(m, dtype=idx_dtype_probe.dtype)
    k = 0
    for i in range(1, n):
        if not ls[i - 1] and ls[i]:
            lms[k] = i
            k += 1
    return lms_map, lms


@njit(cache=True, nogil=True)
def _reduce(s, ls, sa, lms_map, lms):
    n = len(s)
    m = len(lms)
    sorted_lms = np.empty(m, dtype=lms.dtype)
    k = 0
    for i in range(n):
        v = sa[i]
        if lms_map[v] != -1:
            sorted_lms[k] = v
            k += 1
    rec_s = np.zeros(m, dtype=lms.dtype)
    rec_upper = 0
    rec_s[lms_map[sorted_lms[0]]] = 0
    for i in range(1, m):
        left = sorted_lms[i - 1]
        right = sorted_lms[i]
        end_l = lms[lms_map[left] + 1] if lms_map[left] + 1 < m else n
        end_r = lms[lms_map[right] + 1] if lms_map[right] + 1 < m else n
        same = True
        if end_l - left != end_r - right:
            same = False
        else:
            while left < end_l:
                if s[left] != s[right]:
                    break
                left += 1
                right += 1
            if left == n or s[left] != s[right]:
                same = False
        if not same:
            rec_upper += 1
        rec_s[lms_map[sorted_lms[i]]] = rec_upper
    return rec_s, rec_upper


@njit(cache=True, nogil=True)
def _map_sorted(lms, rec_sa, out):
    for i in range(len(rec_sa)):
        out[i] = lms[rec_sa[i]]


def suffix_array(s: np.ndarray, upper: int | None = None, index_dtype=None) -> np.ndarray:
    """Suffix array of integer sequence ``s`` with symbols in ``[0, upper]``.

    Suffixes are ordered as plain strings (a proper prefix sorts first).
    ``index_dtype`` defaults to int32 when the length allows it.
    """
    s = np.ascontiguousarray(s)
    n = len(s)
    if index_dtype is None:
        index_dtype = np.int32 if n < 2**31 - 1 else np.int64
    if upper is None:
        upper = int(s.max()) if n else 0
    if n == 0:
        return np.zeros(0, dtype=index_dtype)
    if n == 1:
        return np.zeros(1, dtype=index_dtype)
    if n == 2:
        return np.array([0, 1] if s[0] < s[1] else [1, 0], dtype=index_dtype)
    probe = np.zeros(1, dtype=index_dtype)
    ls, sum_l, sum_s = _classify(s, upper)
    lms_map, lms = _lms_positions(ls, probe)
    sa = np.empty(n, dtype=index_dtype)
    _induce(s, ls, sum_l, sum_s, lms, sa)
    m = len(lms)
    if m:
        rec_s, rec_upper = _reduce(s, ls, sa, lms_map, lms)
        del lms_map
        rec_sa = suffix_array(rec_s, int(rec_upper), index_dtype)
        sorted_lms = np.empty(m, dtype=index_dtype)
        _map_sorted(lms, rec_sa, sorted_lms)
        del rec_sa, rec_s
        _induce(s, ls, sum_l, sum_s, sorted_lms, sa)
    return sa
