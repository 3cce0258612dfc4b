"""Independent reference implementations used by the tests."""
import itertools

import numpy as np

from occlight.sensing import detection_likelihood


def brute_force_onoff(A, env, region, f_min, cost, margin=1.0):
    """Cheapest 0/1 vector meeting A[p] @ sw + env[p] >= f_min + margin on region.

    Scans itertools.product order (lexicographic) and keeps the first minimum.
    Returns None when even all-on fails.
    """
    n = A.shape[1]
    best, best_cost = None, np.inf
    for sw in itertools.product((0, 1), repeat=n):
        sw = np.array(sw, dtype=float)
        if all(A[p] @ sw + env[p] >= f_min + margin for p in region):
            c = float(cost @ sw)
            if c < best_cost:
                best, best_cost = sw, c
    return best


def enumerate_posterior(T, prior, sensors, positions, state_pos, bits_seq):
    """Posterior over the last state by summing over every state sequence.

    A step that stays in the same state is scored with static detection
    probabilities, any other step with moving ones.
    """
    m, h = len(prior), len(bits_seq)

    def lik(bits, pos, moving):
        out = 1.0
        for s, b in zip(sensors, bits):
            out *= detection_likelihood(s, tuple(positions[pos]), moving, b)
        return out

    lik_s = np.array([[lik(b, state_pos[i], False) for i in range(m)] for b in bits_seq])
    lik_m = np.array([[lik(b, state_pos[i], True) for i in range(m)] for b in bits_seq])
    rest = np.indices((m,) * h).reshape(h, -1)  # every continuation s_1..s_h
    post = np.zeros(m)
    for s0 in range(m):
        w = np.full(rest.shape[1], prior[s0])
        prev = np.full(rest.shape[1], s0)
        for k in range(h):
            cur = rest[k]
            step_lik = np.where(prev == cur, lik_s[k, cur], lik_m[k, cur])
            w = w * T[prev, cur] * step_lik
            prev = cur
        post += np.bincount(prev, weights=w, minlength=m)
    return post / post.sum()


def random_instance(rng, n_lights=None):
    """A random lighting problem: up to 10 ceiling lights over a room and a
    cluster of required cells around a random point (like a candidate set)."""
    from occlight.control import RequirementSpec
    from occlight.env import GridSpec, RoomLayout, build_state_space
    from occlight.lighting import LuminaireSpec, synthetic_field

    n = int(rng.integers(1, 11)) if n_lights is None else n_lights
    area = n * rng.uniform(3.0, 8.0)
    w = np.sqrt(area * rng.uniform(1.0, 2.0))
    d = area / w
    space = build_state_space(RoomLayout(w, d), GridSpec(0.3), (0.0,))
    lums = []
    for i in range(n):
        f = rng.uniform(3000.0, 8000.0)
        watts = rng.uniform(50.0, 120.0)
        pos = (rng.uniform(0, w), rng.uniform(0, d), 2.7)
        lums.append(LuminaireSpec(f"L{i + 1}", pos, f, watts / f))
    fields = [synthetic_field(l, space, 0.75, rng.uniform(0.0, 1.0)) for l in lums]
    centre = space.positions[rng.integers(space.n_positions)]
    dist = np.hypot(*(space.positions - centre).T)
    region = np.flatnonzero(dist <= rng.uniform(0.0, 1.0))
    env = rng.uniform(0.0, 150.0, space.n_positions)
    reqs = [RequirementSpec(region, 400.0)]
    return space, lums, fields, env, reqs
