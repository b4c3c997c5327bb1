import math


def sigma(p, n):
    return math.sqrt(p * (1 - p) / n)


def assert_within_sigma(observed, expected_p, n, k=3.0):
    s = sigma(expected_p, n)
    assert abs(observed - expected_p) <= k * s, f"{observed} not within {k} sigma ({s:.3g}) of {expected_p}"
