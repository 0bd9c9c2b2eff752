"""Single command-line entry point: evolve, project, train, eval, serve,
convert. Flags can be pre-loaded from a flat key-value config file; explicit
flags win. Every run echoes its effective configuration next to its outputs
so experiments replay exactly."""

from __future__ import annotations

import argparse
import logging
import os
import sys

from . import (camera, datastore, evolve as evolve_mod, metrics, regressor,
               service, skeleton, validity)

log = logging.getLogger("evolift")


class UsageError(Exception):
    pass


def _setup_logging(verbosity):
    level = os.environ.get("EVOLIFT_LOG_LEVEL")
    if level is None:
        level = {0: "WARNING", 1: "INFO"}.get(verbosity, "DEBUG")
    logging.basicConfig(level=getattr(logging, level.upper(), logging.INFO),
                        format="%(message)s")


def _require_file(path, what):
    if path is None:
        raise UsageError(f"{what} is required")
    if not os.path.exists(path):
        raise UsageError(f"{what} not found: {path}")
    return path


def _load_tree(args):
    if getattr(args, "tree", None):
        return skeleton.load_tree(_require_file(args.tree, "tree file"))
    return skeleton.default_tree()


def _load_intrinsics(args):
    if getattr(args, "camera", None):
        return camera.load_camera(_require_file(args.camera, "camera file"))
    return camera.DEFAULT_INTRINSICS


def _apply_config_file(args, argv):
    """Fill flags from a key=value file; values given on the command line win."""
    if not getattr(args, "config", None):
        return args
    values = datastore.load_config(_require_file(args.config, "config file"))
    given = {a.split("=", 1)[0].lstrip("-").replace("-", "_")
             for a in argv if a.startswith("--")}
    for key, raw in values.items():
        dest = key.replace("-", "_")
        if not hasattr(args, dest) or dest in given:
            continue
        current = getattr(args, dest)
        if isinstance(current, bool):
            setattr(args, dest, raw.lower() in ("1", "true", "yes"))
        elif isinstance(current, int):
            setattr(args, dest, int(raw))
        elif isinstance(current, float):
            setattr(args, dest, float(raw))
        else:
            setattr(args, dest, raw)
    return args


def _echo_config(out_path, values):
    path = out_path + ".config.txt"
    datastore.save_config(path, values)
    log.info("effective config written to %s", path)


def cmd_evolve(args):
    tree = _load_tree(args)
    seed_path = _require_file(args.seed, "seed skeleton file")
    seed_poses = datastore.load_skeletons(seed_path, tree)
    seed = evolve_mod.Population.from_poses(list(seed_poses))
    if args.grid:
        model = datastore.load_validity_model(_require_file(args.grid, "grid file"))
    else:
        model = validity.fit_from_population(
            list(seed_poses), tree, theta_bins=args.theta_bins,
            phi_bins=args.phi_bins, dilation_radius=args.dilation)
    if args.save_grid:
        datastore.save_validity_model(args.save_grid, model)
    config = evolve_mod.EvolutionConfig(
        generations=args.generations, noise_sigma=args.noise_sigma,
        pairs_per_generation=args.pairs_per_generation,
        mutation_probability=args.mutation_probability,
        global_orientation_sigma=args.global_orientation_sigma,
        length_sigma=args.length_sigma,
        length_clip=(args.length_clip_min, args.length_clip_max),
        rng_seed=args.rng_seed)

    def progress(gen, size, accepted, rejected):
        print(f"generation {gen}: population {size} (+{accepted}, rejected {rejected})")

    population = evolve_mod.evolve(seed, config, model, tree, progress=progress)
    datastore.save_skeletons(args.out, population.poses, tree)
    prov_path = args.prov or args.out + ".prov"
    datastore.save_provenance(prov_path, population.provenance)
    _echo_config(args.out, {
        "seed": seed_path, "out": args.out, "prov": prov_path,
        "generations": config.generations, "noise_sigma": config.noise_sigma,
        "pairs_per_generation": config.pairs_per_generation,
        "mutation_probability": config.mutation_probability,
        "global_orientation_sigma": config.global_orientation_sigma,
        "length_sigma": config.length_sigma,
        "length_clip_min": config.length_clip[0],
        "length_clip_max": config.length_clip[1],
        "rng_seed": config.rng_seed,
        "theta_bins": args.theta_bins, "phi_bins": args.phi_bins,
        "dilation": args.dilation,
    })
    print(f"evolved population: {len(population)} poses -> {args.out}")
    return 0


def cmd_project(args):
    tree = _load_tree(args)
    skel_path = _require_file(args.skel, "skeleton file")
    intrinsics = _load_intrinsics(args)
    if args.depth_min <= camera.NEAR_PLANE_MM or args.depth_max < args.depth_min:
        raise UsageError("bad depth range")
    skipped = []
    count = 0
    with datastore.PairWriter(args.out, intrinsics, tree.n_joints) as writer:
        pairs = camera.generate_pairs(
            datastore.iter_skeletons(skel_path, tree), intrinsics,
            depth_range=(args.depth_min, args.depth_max),
            rng_seed=args.rng_seed, on_skip=skipped.append)
        for pair in pairs:
            writer.append(pair)
            count += 1
    _echo_config(args.out, {
        "skel": skel_path, "out": args.out,
        "fx": intrinsics.fx, "fy": intrinsics.fy,
        "cx": intrinsics.cx, "cy": intrinsics.cy,
        "width": intrinsics.image_width, "height": intrinsics.image_height,
        "depth_min": args.depth_min, "depth_max": args.depth_max,
        "rng_seed": args.rng_seed,
    })
    if skipped:
        log.warning("skipped %d unplaceable poses", len(skipped))
    print(f"wrote {count} pairs -> {args.out} ({len(skipped)} skipped)")
    return 0


def cmd_train(args):
    pairs_path = _require_file(args.pairs, "pair dataset")
    data = datastore.load_pairs(pairs_path)
    learner_config = regressor.LearnerConfig(
        width=args.width, blocks=args.blocks, dropout_rate=args.dropout,
        input_dim=data.keypoints2d.shape[1] * 2,
        output_dim=data.target3d.shape[1] * 3)
    train_config = regressor.TrainConfig(
        learning_rate=args.learning_rate, epochs=args.epochs,
        batch_size=args.batch_size, rng_seed=args.rng_seed,
        concat_estimates=args.concat_estimates)

    def progress(stage, err):
        print(f"stage {stage}: training mpjpe {err:.6f} mm")

    cascade = regressor.train_cascade(
        data.keypoints2d, data.target3d, cascade_length=args.cascade_length,
        learner_config=learner_config, train_config=train_config,
        progress=progress)
    datastore.save_cascade(args.out, cascade)
    with open(args.out + ".log", "w") as fh:
        for stage, err in enumerate(cascade.train_log, 1):
            fh.write(f"stage {stage} train_mpjpe_mm {err!r}\n")
    _echo_config(args.out, {
        "pairs": pairs_path, "out": args.out,
        "cascade_length": args.cascade_length, "width": args.width,
        "blocks": args.blocks, "dropout": args.dropout,
        "learning_rate": args.learning_rate, "epochs": args.epochs,
        "batch_size": args.batch_size, "rng_seed": args.rng_seed,
        "concat_estimates": args.concat_estimates,
    })
    print(f"trained cascade of {cascade.length} -> {args.out}")
    return 0


def cmd_eval(args):
    model_path = _require_file(args.model, "cascade file")
    pairs_path = _require_file(args.pairs, "pair dataset")
    cascade = datastore.load_cascade(model_path)
    data = datastore.load_pairs(pairs_path)
    preds = cascade.predict(data.keypoints2d)
    report = metrics.evaluate(preds, data.target3d,
                              pck_threshold_mm=args.pck_threshold,
                              with_scale=not args.no_scale)
    primary = report.mpjpe_mm if args.protocol == "p1" else report.p_mpjpe_mm
    print(report.to_text(), end="")
    print(f"protocol {args.protocol} error: {primary!r} mm")
    if args.report:
        kv = report.to_kv()
        kv["protocol"] = args.protocol
        kv["protocol_error_mm"] = primary
        datastore.save_config(args.report, kv)
        _echo_config(args.report, {"model": model_path, "pairs": pairs_path,
                                   "protocol": args.protocol,
                                   "pck_threshold": args.pck_threshold})
    if args.per_joint_csv:
        with open(args.per_joint_csv, "w") as fh:
            fh.write(report.per_joint_csv())
    return 0


def cmd_serve(args):
    tree = _load_tree(args)
    intrinsics = _load_intrinsics(args)
    dataset = None
    if args.dataset:
        dataset = datastore.load_skeletons(_require_file(args.dataset, "dataset"), tree)
    svc = service.AnnotationService(tree, intrinsics, dataset=dataset,
                                    save_path=args.save, static_dir=args.static)
    server = service.make_server(svc, host=args.host, port=args.port)
    host, port = server.server_address[:2]
    print(f"serving annotation API on {host}:{port}", flush=True)
    try:
        server.serve_forever()
    finally:
        server.server_close()
    return 0


def cmd_convert(args):
    path_in = _require_file(args.input, "input array")
    tree = _load_tree(args)
    count = datastore.convert_npy(path_in, args.out, tree, scale=args.scale)
    print(f"converted {count} poses -> {args.out}")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="evolift",
        description="Evolve 3D pose populations, project them into 2D-3D "
                    "pairs, train and evaluate a cascaded lifting regressor, "
                    "and serve the annotation tool.")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("evolve", help="grow a pose population")
    p.add_argument("--seed", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--prov")
    p.add_argument("--tree")
    p.add_argument("--config")
    p.add_argument("--grid")
    p.add_argument("--save-grid")
    p.add_argument("--theta-bins", type=int, default=36)
    p.add_argument("--phi-bins", type=int, default=72)
    p.add_argument("--dilation", type=int, default=1)
    p.add_argument("--generations", type=int, default=5)
    p.add_argument("--noise-sigma", type=float, default=0.2)
    p.add_argument("--pairs-per-generation", type=int, default=64)
    p.add_argument("--mutation-probability", type=float, default=0.5)
    p.add_argument("--global-orientation-sigma", type=float, default=1.0)
    p.add_argument("--length-sigma", type=float, default=0.05)
    p.add_argument("--length-clip-min", type=float, default=0.7)
    p.add_argument("--length-clip-max", type=float, default=1.3)
    p.add_argument("--rng-seed", type=int, default=0)
    p.set_defaults(func=cmd_evolve)

    p = sub.add_parser("project", help="project poses into 2D-3D pairs")
    p.add_argument("--skel", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--tree")
    p.add_argument("--camera")
    p.add_argument("--config")
    p.add_argument("--depth-min", type=float, default=3000.0)
    p.add_argument("--depth-max", type=float, default=8000.0)
    p.add_argument("--rng-seed", type=int, default=0)
    p.set_defaults(func=cmd_project)

    p = sub.add_parser("train", help="train the cascaded regressor")
    p.add_argument("--pairs", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--config")
    p.add_argument("-T", "--cascade-length", type=int, default=3)
    p.add_argument("-R", "--blocks", type=int, default=3)
    p.add_argument("-d", "--width", type=int, default=1024)
    p.add_argument("--dropout", type=float, default=0.5)
    p.add_argument("--learning-rate", type=float, default=1e-3)
    p.add_argument("--epochs", type=int, default=200)
    p.add_argument("--batch-size", type=int, default=64)
    p.add_argument("--rng-seed", type=int, default=0)
    p.add_argument("--concat-estimates", action="store_true")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a cascade on a pair dataset")
    p.add_argument("--model", required=True)
    p.add_argument("--pairs", required=True)
    p.add_argument("--protocol", choices=("p1", "p2"), default="p1")
    p.add_argument("--pck-threshold", type=float, default=150.0)
    p.add_argument("--no-scale", action="store_true",
                   help="strictly rigid protocol-2 alignment (no scale)")
    p.add_argument("--report")
    p.add_argument("--per-joint-csv")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("serve", help="run the annotation service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8008)
    p.add_argument("--dataset")
    p.add_argument("--tree")
    p.add_argument("--camera")
    p.add_argument("--static")
    p.add_argument("--save")
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("convert", help="import a community-format pose array")
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--tree")
    p.add_argument("--scale", type=float, default=1.0,
                   help="multiplier into millimeters")
    p.set_defaults(func=cmd_convert)
    return parser


def main(argv=None):
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    _setup_logging(args.verbose)
    try:
        args = _apply_config_file(args, argv)
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (skeleton.SkeletonError, evolve_mod.EvolveError, camera.CameraError,
            regressor.RegressorError, metrics.MetricsError,
            datastore.DatastoreError, service.ServiceError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
