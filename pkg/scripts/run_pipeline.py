"""End-to-end desk-scale pipeline demo: synthesize a seed population, evolve
it, project to 2D-3D pairs, train a small cascade, and evaluate on the
training pairs. Everything lands in a work directory (default ./pipeline_out).

    python scripts/run_pipeline.py [workdir]
"""

import pathlib
import sys

import numpy as np

from evolift import cli, datastore
from evolift.skeleton import default_tree, neutral_pose, set_bone_orientation, spherical_of_pose


def synth_seed(count=40, sigma=0.25, rng_seed=0):
    tree = default_tree()
    rng = np.random.default_rng(rng_seed)
    poses = []
    for _ in range(count):
        p = neutral_pose()
        for b in (1, 4, 11, 12, 14, 15):
            sph = spherical_of_pose(p, tree)
            p = set_bone_orientation(p, tree, b, sph[b, 1] + rng.normal(0, sigma),
                                     sph[b, 2] + rng.normal(0, sigma))
        poses.append(p)
    return tree, poses


def main():
    work = pathlib.Path(sys.argv[1] if len(sys.argv) > 1 else "pipeline_out")
    work.mkdir(parents=True, exist_ok=True)
    tree, poses = synth_seed()
    seed = work / "seed.skel"
    datastore.save_skeletons(seed, poses, tree)
    print(f"seed population: {len(poses)} poses -> {seed}")

    evolved = work / "evolved.skel"
    pairs = work / "train.pair"
    model = work / "model.casc"
    report = work / "report.txt"
    steps = [
        ["evolve", "--seed", seed, "--out", evolved,
         "--generations", "3", "--pairs-per-generation", "40", "--rng-seed", "0"],
        ["project", "--skel", evolved, "--out", pairs, "--rng-seed", "1"],
        ["train", "--pairs", pairs, "--out", model,
         "-T", "2", "-R", "1", "-d", "64", "--dropout", "0.25",
         "--epochs", "30", "--rng-seed", "0"],
        ["eval", "--model", model, "--pairs", pairs, "--protocol", "p1",
         "--report", report, "--per-joint-csv", work / "per_joint.csv"],
    ]
    for step in steps:
        print(f"\n$ evolift {' '.join(str(s) for s in step)}")
        code = cli.main([str(s) for s in step])
        if code != 0:
            sys.exit(code)
    print(f"\nartifacts in {work}/")


if __name__ == "__main__":
    main()
