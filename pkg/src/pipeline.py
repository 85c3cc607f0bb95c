import logging
import math
import time
from dataclasses import asdict
from pathlib import Path
from typing import Dict, Optional

import numpy as np

from src import data_io
from src.alignment import AlignmentGraph, align_frames
from src.config import PipelineParams
from src.embedding import DmEmbedding, VdmEmbedding, dm_embed, vdm_embed
from src.geodesic import dijkstra
from src.manifolds import ManifoldSpec, PointCloud, sample
from src.neighbors import NeighborGraph, build_graph
from src.nystrom import ExtensionConfig, NystromExtender
from src.spectral import MultiplicityProfile, Spectrum, detect_multiplicities, eigensolve, repair_degeneracy
from src.tangent import KernelSpec, LocalPcaReport, TangentFrames, local_pca
from src.utils import ConfigError, DataError
from src.vdm_operator import VdmOperator, build

logger = logging.getLogger(__name__)

DISTANCE_KINDS = ("vdm", "vdm-norm", "dm", "geodesic")


class VDMPipeline:
    """
    Runs sample -> frames -> align -> operator -> spectrum and keeps every
    stage's result so that embeddings, distances and extensions can be
    derived from one fit.
    """

    def __init__(self, params: Optional[PipelineParams] = None, threads: int = 1):
        self.params = (params or PipelineParams()).validate()
        self.threads = max(1, int(threads))
        self.spec: Optional[ManifoldSpec] = None
        self.cloud: Optional[PointCloud] = None
        self.pca_graph: Optional[NeighborGraph] = None
        self.graph: Optional[NeighborGraph] = None
        self.report: Optional[LocalPcaReport] = None
        self.frames: Optional[TangentFrames] = None
        self.agraph: Optional[AlignmentGraph] = None
        self.operator: Optional[VdmOperator] = None
        self.spectrum: Optional[Spectrum] = None
        self.groups: Optional[MultiplicityProfile] = None
        self.timings: Dict[str, float] = {}

    def _timed(self, stage: str, func, *args, **kwargs):
        start = time.perf_counter()
        result = func(*args, **kwargs)
        self.timings[stage] = time.perf_counter() - start
        logger.info("stage %s done in %.2fs", stage, self.timings[stage])
        return result

    def _require(self, attribute: str):
        value = getattr(self, attribute)
        if value is None:
            raise DataError(f"Pipeline has no {attribute} yet; call fit() first")
        return value

    def sample(self, spec: ManifoldSpec) -> PointCloud:
        self.spec = spec
        self.cloud = self._timed("sample", sample, spec)
        return self.cloud

    def fit(self, cloud: Optional[PointCloud] = None) -> Spectrum:
        """
        Run every stage up to the spectrum on `cloud` (or the sampled one).

        Returns:
            The leading eigenpairs of S~_alpha
        """
        if cloud is not None:
            self.cloud = cloud
            self.spec = cloud.spec
        cloud = self._require("cloud")
        self.params = self._resolve_scales(cloud)
        p = self.params

        self.pca_graph = self._timed("neighbors_pca", build_graph, cloud,
                                     math.sqrt(p.eps_pca), self.threads)
        self.report, self.frames = self._timed(
            "local_pca", local_pca, cloud, self.pca_graph, KernelSpec.named(p.pca_kernel),
            gamma=p.gamma, fixed_dim=p.dim, threads=self.threads)
        if p.dim is not None and p.dim != self.report.global_dim:
            logger.warning("estimated dimension %d differs from the requested %d; using %d",
                           self.report.global_dim, p.dim, p.dim)

        self.graph = self._timed("neighbors", build_graph, cloud, math.sqrt(p.eps), self.threads)
        self.agraph = self._timed("alignment", align_frames, self.frames, self.graph,
                                  KernelSpec.named(p.weight_kernel), self.threads)
        self.operator = self._timed("operator", build, self.agraph, p.alpha)
        m = min(p.n_eigs, self.operator.size)
        self.spectrum = self._timed("eigensolve", eigensolve, self.operator, m, seed=p.seed)
        self.groups = detect_multiplicities(self.spectrum, p.tau)
        logger.info("multiplicity groups (tau=%.3g): %s", p.tau, self.groups.sizes)
        return self.spectrum

    def _resolve_scales(self, cloud: PointCloud) -> PipelineParams:
        p = self.params
        if p.eps_pca is not None and p.eps is not None:
            return p.resolve(cloud.n, p.dim or 1)
        spec = cloud.spec
        d = p.dim or (spec.intrinsic_dim if spec is not None else None)
        if d is None:
            raise ConfigError("eps_pca/eps cannot be scheduled without a dimension; "
                              "pass --dim or both --eps-pca and --eps")
        boundary = spec.has_boundary if spec is not None else False
        constant = spec.schedule_constant if spec is not None else 1.0
        resolved = p.resolve(cloud.n, d, boundary, constant)
        logger.info("scales: eps_pca=%.6g, eps=%.6g (d=%d%s)", resolved.eps_pca, resolved.eps,
                    d, ", boundary" if boundary else "")
        return resolved

    def update_params(self, **changes) -> PipelineParams:
        """Change embedding-level parameters of a fitted pipeline."""
        self.params = PipelineParams.from_dict({**self.params.to_dict(), **changes})
        if "tau" in changes and self.spectrum is not None:
            self.groups = detect_multiplicities(self.spectrum, self.params.tau)
        return self.params

    def working_spectrum(self) -> Spectrum:
        """The spectrum with the configured degeneracy repair applied."""
        spectrum = self._require("spectrum")
        if self.params.repair_groups:
            return repair_degeneracy(spectrum, self.params.repair_groups)
        return spectrum

    def embed_vdm(self, normalized: Optional[bool] = None, t: Optional[float] = None) -> VdmEmbedding:
        p = self.params
        return vdm_embed(self.working_spectrum(), t if t is not None else p.t, p.delta,
                         normalized=p.normalized if normalized is None else normalized,
                         threads=self.threads)

    def embed_dm(self, t: Optional[float] = None) -> DmEmbedding:
        p = self.params
        return dm_embed(self._require("agraph"), t if t is not None else p.t, p.delta,
                        alpha=p.alpha, n_eigs=p.n_eigs, repair_groups=p.dm_repair_groups,
                        seed=p.seed)

    def distances(self, kind: str, ref: int) -> np.ndarray:
        """Distances from the reference point `ref` to every point."""
        n = self._require("cloud").n
        if not 0 <= ref < n:
            raise ConfigError(f"Reference point {ref} is outside [0, {n})")
        if kind == "vdm":
            return self.embed_vdm(normalized=False).distances_from(ref)
        if kind == "vdm-norm":
            return self.embed_vdm(normalized=True).distances_from(ref)
        if kind == "dm":
            return self.embed_dm().distances_from(ref)
        if kind == "geodesic":
            return dijkstra(self._require("graph"), ref).distances
        raise ConfigError(f"Unknown distance kind {kind!r}; choose from {', '.join(DISTANCE_KINDS)}")

    def compare(self, ref: int) -> Dict[str, np.ndarray]:
        """d_VDM, d_DM and geodesic distance from `ref`, one entry per point."""
        vdm_kind = "vdm-norm" if self.params.normalized else "vdm"
        return {"d_vdm": self.distances(vdm_kind, ref),
                "d_dm": self.distances("dm", ref),
                "geodesic": self.distances("geodesic", ref)}

    def extender(self) -> NystromExtender:
        p = self.params
        cfg = ExtensionConfig(eps=p.eps, eps_pca=p.eps_pca, delta=p.extension_delta,
                              pca_kernel=KernelSpec.named(p.pca_kernel),
                              weight_kernel=KernelSpec.named(p.weight_kernel))
        return NystromExtender(self._require("cloud"), self._require("frames"),
                               self._require("agraph"), self._require("spectrum"), cfg)

    def save(self, out_dir: Path, embedding: bool = True) -> data_io.Manifest:
        """
        Write cloud.csv, spectrum.json (+ eigenvectors), embedding.csv/.json
        and manifest.json into `out_dir`.
        """
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        cloud = self._require("cloud")
        artifacts = {"cloud": "cloud.csv"}
        data_io.write_cloud(out_dir / "cloud.csv", cloud)
        if self.spectrum is not None:
            data_io.write_spectrum(out_dir / "spectrum.json", self.spectrum, self.groups,
                                   vectors_path=out_dir / "eigenvectors.csv")
            artifacts.update(spectrum="spectrum.json", eigenvectors="eigenvectors.csv")
            if embedding:
                emb = self.embed_vdm()
                data_io.write_embedding(out_dir / "embedding.csv", emb.coordinates, emb.metadata())
                artifacts.update(embedding="embedding.csv")

        summary = {}
        if self.report is not None:
            summary.update(estimated_dim=self.report.global_dim,
                           frame_dim=self.frames.dim,
                           median_pca_neighbors=int(np.median(self.report.neighbor_counts)))
        if self.groups is not None:
            summary["groups"] = self.groups.sizes
        manifest = data_io.Manifest(
            params=self.params.to_dict(),
            manifold=asdict(self.spec) if self.spec is not None else None,
            artifacts=artifacts,
            summary=summary,
        )
        data_io.write_manifest(out_dir / "manifest.json", manifest)
        logger.info("artifacts written to %s", out_dir)
        return manifest

    @classmethod
    def from_manifest(cls, path: Path, threads: int = 1) -> "VDMPipeline":
        """Rebuild a fitted pipeline from a manifest and its cloud."""
        path = Path(path)
        manifest = data_io.read_manifest(path)
        pipeline = cls(PipelineParams.from_dict(manifest.params), threads=threads)
        cloud = data_io.read_cloud(manifest.artifact("cloud", path.parent))
        spec = manifest.manifold_spec()
        if spec is not None:
            cloud = PointCloud(points=cloud.points, spec=spec)
        pipeline.fit(cloud)
        return pipeline
