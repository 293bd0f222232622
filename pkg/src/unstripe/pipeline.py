"""End-to-end orchestration: detect -> graph -> train/load -> restore."""

import warnings
from dataclasses import dataclass, field as dc_field

import numpy as np
import torch

from .graph import build_spectral_graph, graph_stats
from .network import GraphTensors, load_checkpoint, save_checkpoint
from .spectral import (
    build_annuli,
    corruption_mask,
    corruption_matrix,
    corruption_stats,
    detect_stripe_direction,
    forward_spectrum,
)
from .training import build_model, train
from .unroll import unfolded_forward
from .volume import Volume, stripe_axis_degrees


@dataclass
class DetectionResult:
    spec: object
    annuli: object
    field: object
    stripe_axis: object
    direction: object = None  # DirectionEstimate when auto-detected

    def report(self):
        rep = {
            "schema_version": 1,
            "stripe_angle_deg": stripe_axis_degrees(self.stripe_axis),
            "masked_bin_count": int(self.field.M.sum()),
            "total_bins": int(self.field.M.size),
            "per_ring_stats": corruption_stats(self.field, self.annuli),
        }
        if self.direction is not None:
            rep["confidence"] = self.direction.confidence
            rep["dominant_direction"] = self.direction.dominant
        return rep


def detect_corruption(vol, cfg, direction="volume"):
    """Run the spectral detector.

    ``direction`` is 'volume' (use the volume's stripe_axis), 'auto'
    (estimate from the spectrum), or an explicit axis/angle.
    """
    vol.validate()
    spec = forward_spectrum(vol)
    n_h, n_v = vol.data.shape[1:]
    annuli = build_annuli(n_h, n_v, cfg.annulus_width_px)
    w = corruption_matrix(spec, annuli)
    estimate = None
    if direction == "volume":
        axis = vol.stripe_axis
    elif direction == "auto":
        estimate = detect_stripe_direction(spec, cfg)
        axis = estimate.angle_deg
        if not estimate.dominant:
            warnings.warn(
                f"no dominant stripe direction (confidence {estimate.confidence:.2f}); "
                f"using best angle {axis:.0f} deg",
                RuntimeWarning,
                stacklevel=2,
            )
    else:
        axis = direction
    field = corruption_mask(w, cfg, axis)
    return DetectionResult(
        spec=spec, annuli=annuli, field=field, stripe_axis=axis, direction=estimate
    )


@dataclass
class DestripeResult:
    output: Volume
    detection: DetectionResult
    graph: object = None
    model: object = None
    log: list = dc_field(default_factory=list)
    iteration_report: list = dc_field(default_factory=list)
    trained: bool = False

    def report(self):
        rep = {
            "schema_version": 1,
            "detection": self.detection.report(),
            "trained": self.trained,
            "iterations": self.iteration_report,
        }
        if self.graph is not None:
            rep["graph"] = graph_stats(self.graph)
        if self.log:
            rep["epochs"] = len(self.log)
            rep["final_loss"] = self.log[-1]["total"]
            rep["best_loss"] = min(e["total"] for e in self.log)
        return rep


def destripe_volume(vol, cfg, direction="volume", checkpoint_in=None, checkpoint_out=None):
    """Full pipeline on one volume; trains unless a checkpoint is supplied."""
    detection = detect_corruption(vol, cfg, direction)
    if int(detection.field.M.sum()) == 0:
        warnings.warn(
            "no corrupted Fourier bins detected; returning the input unchanged",
            RuntimeWarning,
            stacklevel=2,
        )
        out = Volume(
            data=vol.data.copy(),
            voxel_spacing=vol.voxel_spacing,
            stripe_axis=vol.stripe_axis,
        )
        return DestripeResult(output=out, detection=detection)

    graph = build_spectral_graph(
        detection.spec, detection.field, detection.annuli, cfg, seed=cfg.rng_seed
    )
    gt = GraphTensors(graph)
    y = np.asarray(vol.data, dtype=np.float64)

    if checkpoint_in is not None:
        model = build_model(cfg)
        load_checkpoint(model, checkpoint_in)
        log = []
        trained = False
    else:
        result = train(y, cfg, gt, detection.field, detection.annuli)
        model = result.model
        log = result.log
        trained = True

    with torch.no_grad():
        x, iter_report = unfolded_forward(
            torch.as_tensor(y), cfg, model, gt, collect_report=True
        )
    out = Volume(
        data=x.numpy(),
        voxel_spacing=vol.voxel_spacing,
        stripe_axis=vol.stripe_axis,
    )
    if checkpoint_out is not None:
        save_checkpoint(model, checkpoint_out, meta={"config": cfg.to_dict()})
    return DestripeResult(
        output=out,
        detection=detection,
        graph=graph,
        model=model,
        log=log,
        iteration_report=iter_report,
        trained=trained,
    )
