"""Smoke test for the pyrsma360 extension.

Build and install first:
    cd crates/py && maturin build --release && pip install ../../target/wheels/pyrsma360-*.whl
"""

import math

import pyrsma360 as r


def close(a, b, tol=1e-9):
    return abs(a - b) <= tol


def main():
    rates = r.rsma_rates([1.0, 2.0], 1.0, 4.0, [1.0, 1.0], 1.0)
    assert close(rates["sinr_common"][0], 4 / 3)
    assert close(rates["sinr_common"][1], 8 / 5)
    assert close(rates["rate_private"][0], math.log2(1.5))

    w = r.latitude_weights(4)
    assert all(close(a, b, 1e-5) for a, b in zip(w, [0.38268, 0.92388, 0.92388, 0.38268]))

    assert close(r.clipped_objective(1.3, 2.0, 0.1), 2.2)
    g, a = r.returns_and_advantages([1, 1, 1], [False, False, True], [0, 0, 0], 0.4)
    assert all(close(x, y) for x, y in zip(g, [1.56, 1.4, 1.0]))

    q = r.eval_quality(0.125, 20.0)
    s = r.qos_score(691200, 2.594e9, q)
    assert 0.0 <= s["total"] <= 2.0

    env = r.Env(scheme="rsma", num_users=2)
    obs = env.reset(0, 7)
    assert len(obs) == env.obs_dim
    done = False
    steps = 0
    while not done:
        obs, reward, done, totals = env.step([0.0] * env.action_dim)
        assert 0.0 <= reward <= 2.0 and len(totals) == 2
        steps += 1
    assert steps == 100

    try:
        env.step([0.0] * env.action_dim)
    except ValueError:
        pass
    else:
        raise AssertionError("stepping a finished episode should fail")

    history = r.train(epochs=3, seed=1, num_users=1, update_horizon=100)
    assert len(history) == 3 and all(0.0 <= v <= 2.0 for v in history)
    print("pyrsma360 smoke test passed")


if __name__ == "__main__":
    main()
