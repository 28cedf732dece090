"""Smoke test for the `guap` extension module.

Build first:
    cargo build --release -p guap-py --features extension-module
then run:
    python3 python/smoke_test.py [path/to/libguap.so]
"""

import importlib.util
import math
import os
import shutil
import sys
import tempfile

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))


def load_module(lib):
    tmp = tempfile.mkdtemp()
    target = os.path.join(tmp, "guap.so")
    shutil.copy(lib, target)
    spec = importlib.util.spec_from_file_location("guap", target)
    module = importlib.util.module_from_spec(spec)
    spec.loader.exec_module(module)
    return module, tmp


def main():
    lib = sys.argv[1] if len(sys.argv) > 1 else os.path.join(ROOT, "target", "release", "libguap.so")
    guap, tmp = load_module(lib)

    g = guap.Graph.sbm(seed=0, nodes_per_block=30, train_per_class=6, test_per_class=15)
    assert g.n == 90 and g.num_classes == 3, g
    print(g)

    model = guap.train_gcn(g, epochs=100)
    assert len(model.predict(g)) == g.n
    print(f"victim test accuracy {model.acc_test:.3f}")

    patch = guap.generate_patch(g, model, seed=1, max_epoch=3, max_iter=10, patch_nodes=3)
    assert patch.m == 3
    assert len(patch.border) == g.n and all(len(r) == 3 for r in patch.border)
    assert all(v in (0.0, 1.0) for r in patch.border for v in r)
    block = patch.patch_block
    assert all(block[p][q] == block[q][p] for p in range(3) for q in range(3))
    assert all(block[p][p] == 0.0 for p in range(3))

    node = g.train_nodes[0]
    flipped = patch.flipped_border(g, node)
    assert flipped[node] == [1.0 - v for v in patch.border[node]]

    report = guap.evaluate(patch, g, model)
    assert math.isclose(report["delta_acc"], report["acc_patched"] - report["acc_clean"])
    print(f"ASR train {report['asr_train']:.3f}, test {report['asr_test']:.3f}, dAcc {report['delta_acc']:+.3f}")

    path = os.path.join(tmp, "patch.txt")
    patch.save(path)
    again = guap.Patch.load(path)
    assert again.border == patch.border and again.features == patch.features

    base = guap.baseline_no_edges(g, model, 0, 0)
    assert base["asr_test"] == 0.0

    q = guap.binarized_one_probability(0.5)
    assert math.isclose(q, 0.5, abs_tol=1e-12), q
    try:
        guap.binarized_one_probability(1.5)
    except ValueError:
        pass
    else:
        raise AssertionError("p outside (0, 1) accepted")

    shutil.rmtree(tmp)
    print("python smoke test passed")


if __name__ == "__main__":
    main()
