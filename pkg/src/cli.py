import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

from src import data_io
from src.config import KERNEL_NAMES, PipelineParams, Settings
from src.manifolds import KINDS, ManifoldSpec, PointCloud, sample
from src.nystrom import SampledVectorField
from src.pipeline import DISTANCE_KINDS, VDMPipeline
from src.utils import ConfigError, DataError, NumericalError, VDMError, configure_logging

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERICAL = 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def _group_sizes(text: str) -> List[int]:
    try:
        sizes = [int(part) for part in text.split(",") if part.strip()]
    except ValueError as e:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from e
    if not sizes or any(s < 1 for s in sizes):
        raise argparse.ArgumentTypeError(f"group sizes must be positive, got {text!r}")
    return sizes


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--out", type=Path, help="artifact directory (default: $VDMKIT_OUTPUT_DIR)")
    parser.add_argument("--threads", type=int, help="worker cap (default: $VDMKIT_THREADS)")
    parser.add_argument("--log-level", help="DEBUG, INFO, WARNING, ... (default: $VDMKIT_LOG_LEVEL)")


def _add_source(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--manifold", choices=KINDS, help="synthetic manifold to sample")
    parser.add_argument("--n", type=int, help="number of sample points")
    parser.add_argument("--seed", type=int, help="sampling and eigensolver seed")
    parser.add_argument("--dim", type=int, help="intrinsic/frame dimension (also the sphere dimension)")
    parser.add_argument("--ambient-dim", type=int, help="embed the sphere in R^p")
    parser.add_argument("--noise", type=float, help="ambient Gaussian noise level (default: 0)")


def _add_params(parser: argparse.ArgumentParser) -> None:
    _add_source(parser)
    parser.add_argument("--cloud", type=Path, help="point cloud CSV instead of --manifold")
    parser.add_argument("--manifest", type=Path, help="reuse the parameters and cloud of a pipeline run")
    parser.add_argument("--eps-pca", type=float)
    parser.add_argument("--eps", type=float)
    parser.add_argument("--alpha", type=float)
    parser.add_argument("--t", type=float)
    parser.add_argument("--delta", type=float)
    parser.add_argument("--gamma", type=float)
    parser.add_argument("--tau", type=float, help="relative gap for multiplicity grouping")
    parser.add_argument("--n-eigs", type=int, help="number of eigenpairs")
    parser.add_argument("--kernel", choices=KERNEL_NAMES, help="kernel for both PCA and weights")
    parser.add_argument("--repair-degeneracy", type=_group_sizes, metavar="SIZES",
                        help="comma-separated eigenvalue group sizes to flatten, e.g. 6,10,14")
    parser.add_argument("--dm-repair-degeneracy", type=_group_sizes, metavar="SIZES")
    parser.add_argument("--normalized", action=argparse.BooleanOptionalAction, default=None,
                        help="use the degree-normalized embedding V'")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="vdmkit", description="Vector diffusion maps on point clouds")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("sample", help="sample a synthetic manifold")
    _add_common(p)
    _add_source(p)
    p.set_defaults(handler=cmd_sample)

    p = sub.add_parser("pipeline", help="run the full pipeline and write artifacts")
    _add_common(p)
    _add_params(p)
    p.set_defaults(handler=cmd_pipeline)

    p = sub.add_parser("spectrum", help="print the leading spectrum as JSON")
    _add_common(p)
    _add_params(p)
    p.set_defaults(handler=cmd_spectrum)

    p = sub.add_parser("distances", help="distances from a reference point")
    p.add_argument("kind", choices=DISTANCE_KINDS)
    p.add_argument("--ref", type=int, default=0)
    _add_common(p)
    _add_params(p)
    p.set_defaults(handler=cmd_distances)

    p = sub.add_parser("extend", help="Nystrom extension of a vector field to query points")
    p.add_argument("--queries", type=Path, required=True, help="query points CSV")
    field = p.add_mutually_exclusive_group()
    field.add_argument("--eigenvector", type=int, default=0, help="extend eigenvector field l")
    field.add_argument("--field", type=Path, help="ambient vector field CSV, one row per sample point")
    p.add_argument("--extension-delta", type=float, help="drop eigenvectors with |lambda| at or below this")
    _add_common(p)
    _add_params(p)
    p.set_defaults(handler=cmd_extend)

    p = sub.add_parser("compare", help="d_VDM, d_DM and geodesic distances from a reference point")
    p.add_argument("--ref", type=int, default=0)
    _add_common(p)
    _add_params(p)
    p.set_defaults(handler=cmd_compare)
    return parser


def _manifold_spec(args: argparse.Namespace) -> ManifoldSpec:
    if args.manifold is None or args.n is None:
        raise ConfigError("--manifold and --n are required to sample a cloud")
    sampling = "grid" if args.manifold in ("interval", "square") else "uniform_iid"
    return ManifoldSpec(kind=args.manifold, n=args.n, seed=args.seed or 0, sampling=sampling,
                        d=args.dim or 2, ambient_dim=args.ambient_dim,
                        noise=args.noise if args.noise is not None else 0.0)


def _params(args: argparse.Namespace) -> PipelineParams:
    given: Dict[str, Any] = {}
    for flag, key in (("eps_pca", "eps_pca"), ("eps", "eps"), ("alpha", "alpha"), ("t", "t"),
                      ("delta", "delta"), ("gamma", "gamma"), ("tau", "tau"), ("n_eigs", "n_eigs"),
                      ("dim", "dim"), ("seed", "seed"), ("normalized", "normalized"),
                      ("repair_degeneracy", "repair_groups"),
                      ("dm_repair_degeneracy", "dm_repair_groups"),
                      ("extension_delta", "extension_delta")):
        value = getattr(args, flag, None)
        if value is not None:
            given[key] = value
    if args.kernel is not None:
        given.update(pca_kernel=args.kernel, weight_kernel=args.kernel)
    return PipelineParams.from_dict(given)


def _fitted_pipeline(args: argparse.Namespace, threads: int) -> VDMPipeline:
    sources = [s for s in ("manifest", "cloud", "manifold") if getattr(args, s, None) is not None]
    if len(sources) != 1:
        raise ConfigError("give exactly one of --manifest, --cloud, --manifold")
    if args.manifest is not None:
        pipeline = VDMPipeline.from_manifest(args.manifest, threads=threads)
        _override_from_flags(pipeline, args)
        return pipeline
    pipeline = VDMPipeline(_params(args), threads=threads)
    if args.cloud is not None:
        pipeline.fit(data_io.read_cloud(args.cloud))
    else:
        pipeline.sample(_manifold_spec(args))
        pipeline.fit()
    return pipeline


def _override_from_flags(pipeline: VDMPipeline, args: argparse.Namespace) -> None:
    # embedding-level flags may change after the fit; structural ones may not
    structural = ("eps_pca", "eps", "alpha", "gamma", "dim", "kernel", "n_eigs", "n", "seed",
                  "ambient_dim", "noise")
    clashing = [f for f in structural if getattr(args, f, None) is not None]
    if clashing:
        raise ConfigError(f"--manifest fixes {', '.join('--' + f.replace('_', '-') for f in clashing)}; "
                          "rerun `pipeline` to change them")
    updates = {k: getattr(args, f) for f, k in (("t", "t"), ("delta", "delta"), ("tau", "tau"),
                                                ("normalized", "normalized"),
                                                ("repair_degeneracy", "repair_groups"),
                                                ("dm_repair_degeneracy", "dm_repair_groups"),
                                                ("extension_delta", "extension_delta"))
               if getattr(args, f, None) is not None}
    if updates:
        pipeline.update_params(**updates)


def cmd_sample(args: argparse.Namespace, out: Path, threads: int) -> int:
    cloud = sample(_manifold_spec(args))
    out.mkdir(parents=True, exist_ok=True)
    data_io.write_cloud(out / "cloud.csv", cloud)
    return EXIT_OK


def cmd_pipeline(args: argparse.Namespace, out: Path, threads: int) -> int:
    pipeline = _fitted_pipeline(args, threads)
    manifest = pipeline.save(out)
    print(json.dumps({"out": str(out), "groups": manifest.summary.get("groups", [])}))
    return EXIT_OK


def cmd_spectrum(args: argparse.Namespace, out: Path, threads: int) -> int:
    pipeline = _fitted_pipeline(args, threads)
    out.mkdir(parents=True, exist_ok=True)
    data_io.write_spectrum(out / "spectrum.json", pipeline.spectrum, pipeline.groups)
    print(json.dumps(pipeline.spectrum.to_dict(pipeline.groups), indent=2))
    return EXIT_OK


def cmd_distances(args: argparse.Namespace, out: Path, threads: int) -> int:
    pipeline = _fitted_pipeline(args, threads)
    row = pipeline.distances(args.kind, args.ref)
    out.mkdir(parents=True, exist_ok=True)
    data_io.write_distances(out / f"distances_{args.kind}_ref{args.ref}.csv", {args.kind: row})
    return EXIT_OK


def cmd_compare(args: argparse.Namespace, out: Path, threads: int) -> int:
    pipeline = _fitted_pipeline(args, threads)
    table = pipeline.compare(args.ref)
    out.mkdir(parents=True, exist_ok=True)
    data_io.write_distances(out / f"compare_ref{args.ref}.csv", table)
    return EXIT_OK


def cmd_extend(args: argparse.Namespace, out: Path, threads: int) -> int:
    pipeline = _fitted_pipeline(args, threads)
    cloud: PointCloud = pipeline.cloud
    queries, _ = data_io.read_matrix(args.queries, columns=cloud.ambient_dim)
    spectrum = pipeline.spectrum
    extender = pipeline.extender()
    if args.field is not None:
        ambient, _ = data_io.read_matrix(args.field, columns=cloud.ambient_dim)
        vector_field = SampledVectorField.from_ambient(pipeline.frames, ambient, spectrum)
    else:
        if not 0 <= args.eigenvector < spectrum.m:
            raise ConfigError(f"--eigenvector must lie in [0, {spectrum.m})")
        if args.eigenvector not in extender.retained:
            raise DataError(f"Eigenvector {args.eigenvector} is not retained at delta={extender.cfg.delta}; "
                            f"retained: {extender.retained.tolist()}")
        right = spectrum.right_vectors()[:, args.eigenvector]
        vector_field = SampledVectorField.from_blocks(right, spectrum)
    extended = extender.extend_many(vector_field, queries, threads=threads)
    out.mkdir(parents=True, exist_ok=True)
    data_io.write_matrix(out / "extended.csv", extended)
    return EXIT_OK


def _exit_code(error: VDMError) -> int:
    if isinstance(error, NumericalError):
        return EXIT_NUMERICAL
    if isinstance(error, DataError):
        return EXIT_DATA
    return EXIT_USAGE


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Entry point; returns the process exit code."""
    try:
        settings = Settings.from_env()
        args = build_parser().parse_args(argv)
        configure_logging(args.log_level or settings.log_level)
        threads = args.threads if args.threads is not None else settings.threads
        if threads < 1:
            raise ConfigError(f"--threads (or VDMKIT_THREADS) must be at least 1, got {threads}")
        out = args.out if args.out is not None else Path(settings.output_dir)
        return args.handler(args, out, threads)
    except VDMError as e:
        logger.debug("command failed", exc_info=True)
        print(f"vdmkit: error: {e}", file=sys.stderr)
        return _exit_code(e)
