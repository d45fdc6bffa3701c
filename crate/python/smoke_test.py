"""Smoke test for the Python bindings. Run after `pip install -e crates/py`."""

import json
import pathlib
import tempfile

import vap

RUN = """
[generator]
n_customers = 5
fleet_size = 3
n_vehicle_types = 2

[model]
d_h = 8
n_layers = 1
n_head = 2
d_ff = 16
n_vehicle_types = 2

[train]
epochs = 2
batches_per_epoch = 2
batch_size = 4
samples = 4
validation_size = 8
threads = 1
"""


def main():
    inst = vap.Instance.generate(6, 4, n_vehicle_types=2, variant="tw", seed=3)
    assert inst.validate() == [], inst.validate()
    assert vap.Instance.from_json(inst.to_json()).to_json() == inst.to_json()
    print(inst)

    greedy = vap.greedy_solve(inst)
    oracle = vap.oracle_solve(inst)
    assert greedy.feasible and oracle.feasible
    assert greedy.check(inst) == [] and oracle.check(inst) == []
    assert oracle.objective <= greedy.objective + 1e-9
    assert abs(oracle.cost(inst) - oracle.objective) < 1e-9
    print("greedy", greedy, "oracle", oracle)

    env = vap.Env(inst)
    while not env.done:
        mask = env.mask()
        env.step(mask.index(True))
    sol = env.solution()
    if sol.feasible:
        assert abs(env.total_reward + sol.objective) < 1e-9
    print("first-legal rollout", sol, "reward", round(env.total_reward, 6))

    policy = vap.Policy(d_h=8, n_layers=1, n_head=2, n_vehicle_types=2, seed=1)
    assert policy.param_count > 0
    best = policy.sample_best(inst, n=8, seed=0)
    again = policy.sample_best(inst, n=8, seed=0)
    assert best.to_json() == again.to_json()
    policy.greedy(inst)

    with tempfile.TemporaryDirectory() as d:
        start, best_val, epochs = vap.train(RUN, d)
        assert epochs == 2 and best_val <= start + 1e-12
        ckpt = pathlib.Path(d) / "best.ckpt"
        assert (pathlib.Path(d) / "metrics.jsonl").is_file()
        loaded = vap.Policy.load(str(ckpt))
        assert loaded.param_count == vap.Policy(8, 1, 2, 2, d_ff=16).param_count
        loaded.greedy(inst)
        print("train", start, "->", best_val)

    try:
        vap.Instance.generate(5, 3, variant="xyz")
    except ValueError as e:
        print("bad variant rejected:", e)
    else:
        raise AssertionError("bad variant accepted")

    json.loads(oracle.to_json())
    print("ok")


if __name__ == "__main__":
    main()
