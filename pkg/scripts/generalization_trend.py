"""Held-out generalization experiment: does evolving the training population
reduce error on a deliberately unseen posture cluster?

Two training clusters (right arm raised / left arm raised) never show the
held-out combination (both arms raised); crossover reassembles it. For each
RNG seed we train the same small lifter on the raw seed set and on its
evolved version and compare held-out MPJPE.

    python scripts/generalization_trend.py [--trials 5] [--growth 2.5]
"""

import argparse
import time

import numpy as np

from evolift import camera, regressor, validity
from evolift import evolve as evolve_mod
from evolift.metrics import mpjpe
from evolift.skeleton import default_tree, neutral_pose, set_bone_orientation, spherical_of_pose

RAISE_THETA = 1.9
JITTER_BONES = (1, 4, 11, 12, 14, 15)


def make_pose(tree, base_sph, rng, right_up, left_up, sigma=0.12):
    p = neutral_pose()
    if right_up:
        p = set_bone_orientation(p, tree, 14, base_sph[14, 1] + RAISE_THETA, base_sph[14, 2])
    if left_up:
        p = set_bone_orientation(p, tree, 11, base_sph[11, 1] + RAISE_THETA, base_sph[11, 2])
    for b in JITTER_BONES:
        sph = spherical_of_pose(p, tree)
        p = set_bone_orientation(p, tree, b, sph[b, 1] + rng.normal(0, sigma),
                                 sph[b, 2] + rng.normal(0, sigma))
    return p


def as_arrays(pairs):
    kp = np.array([p.keypoints2d for p in pairs], dtype=np.float64)
    tg = np.array([p.target3d for p in pairs], dtype=np.float64)
    return kp, tg


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--trials", type=int, default=5)
    ap.add_argument("--cluster-size", type=int, default=30)
    ap.add_argument("--held-out", type=int, default=50)
    ap.add_argument("--growth", type=float, default=2.5)
    ap.add_argument("--epochs", type=int, default=60)
    args = ap.parse_args()

    tree = default_tree()
    base_sph = spherical_of_pose(neutral_pose(), tree)
    rng = np.random.default_rng(77)
    seed_poses = ([make_pose(tree, base_sph, rng, True, False)
                   for _ in range(args.cluster_size)]
                  + [make_pose(tree, base_sph, rng, False, True)
                     for _ in range(args.cluster_size)])
    held_out = [make_pose(tree, base_sph, rng, True, True)
                for _ in range(args.held_out)]
    prior = validity.fit_from_population(seed_poses, tree, dilation_radius=2)

    kp_seed, tg_seed = as_arrays(list(camera.generate_pairs(seed_poses, rng_seed=100)))
    kp_held, tg_held = as_arrays(list(camera.generate_pairs(held_out, rng_seed=200)))
    learner = regressor.LearnerConfig(width=64, blocks=1, dropout_rate=0.25)
    pairs_per_gen = int(len(seed_poses) * (args.growth - 1.0) / 2 * 1.25)

    print(f"{'trial':>5} {'evolved':>8} {'baseline':>9} {'evolved':>8}  result")
    wins = 0
    t0 = time.time()
    for trial in range(args.trials):
        grown = evolve_mod.evolve(
            evolve_mod.Population.from_poses(seed_poses),
            evolve_mod.EvolutionConfig(generations=2, pairs_per_generation=pairs_per_gen,
                                       noise_sigma=0.1, mutation_probability=0.3,
                                       global_orientation_sigma=0.0, length_sigma=0.0,
                                       rng_seed=trial),
            prior, tree)
        kp_evo, tg_evo = as_arrays(list(camera.generate_pairs(grown.poses,
                                                              rng_seed=100 + trial)))
        tc = regressor.TrainConfig(epochs=args.epochs, batch_size=32, rng_seed=trial)
        base_model = regressor.train_cascade(kp_seed, tg_seed, 1, learner, tc)
        evo_model = regressor.train_cascade(kp_evo, tg_evo, 1, learner, tc)
        e_base = mpjpe(base_model.predict(kp_held), tg_held)
        e_evo = mpjpe(evo_model.predict(kp_held), tg_held)
        won = e_evo < e_base
        wins += won
        print(f"{trial:>5} {len(grown):>8} {e_base:>9.1f} {e_evo:>8.1f}  "
              f"{'improved' if won else 'regressed'}")
    print(f"\nevolved data improved held-out MPJPE in {wins}/{args.trials} trials "
          f"({time.time() - t0:.0f}s)")


if __name__ == "__main__":
    main()
