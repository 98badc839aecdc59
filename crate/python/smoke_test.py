"""Exercises the extension module end to end: count, simulate, fit, predict, evaluate."""
import json
import sys

import kernelcost as kc

copy = kc.Kernel.from_suite("copy", group="256")
assert copy.name == "copy" and copy.params == ["n"]
report = copy.count({"n": 1024})
assert report["properties"]["mem.global.load.s32.1/1"] == 1024
assert copy.count()["properties"]["mem.global.load.s32.1/1"] == "n"

try:
    kc.Kernel("kernel bad\narray x : f32[n]\n")
except kc.KernelCostError as e:
    assert str(e).startswith("E_"), e
else:
    sys.exit("bad kernel parsed")

fury = kc.Weights.r9_fury()
empty = kc.Kernel.from_suite("empty", group="16x16")
seconds, parts = fury.predict(empty, {"n": 512})
assert abs(seconds - 1.3284e-4) < 1e-15, seconds
assert dict(parts)["launch.const"] == 1.29e-4

measured = kc.simulate("measurement")
assert len(measured.splitlines()) == 131
weights = kc.fit(measured, device="R9Fury")
assert json.loads(weights.to_json())["fit"]["objective"] < 1e-10
assert abs(weights.get("launch.const") / 1.29e-4 - 1) < 1e-6

test = kc.simulate("test", sigma=0.02, seed=4)
noisy = kc.fit(kc.simulate(sigma=0.02, seed=3))
result = kc.evaluate(noisy, test)
assert [k["kernel"] for k in result["kernels"]] == kc.suite_kernels("test")
assert result["cross_kernel_geomean_error"] <= 0.05, result

assert abs(kc.geometric_mean_error([(1.1, 1.0), (0.9, 1.0)]) - 0.1) < 1e-12
print("smoke test passed: cross-kernel error %.4f" % result["cross_kernel_geomean_error"])
