"""Training orchestration: deterministic sampling, the optimization loop,
step logging, checkpointing and early stopping.

Sampling is replayable: the image picked for (step, slot) and that crop's
offsets derive from seed material (seed, step, slot) alone, never from how
much of the stream was consumed before. Resuming from a checkpoint therefore
sees exactly the crops an uninterrupted run would have seen.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from .. import __version__
from ..labelgen import build_targets, sample_crop
from ..losses import LossWeights, total_loss
from ..network import (
    TextDetector,
    load_checkpoint,
    restore_model,
    save_checkpoint,
)
from ..network.model import OUTPUT_STRIDE, image_to_tensor
from ..postprocess import NmsConfig, apply_nms, decode_predictions
from ..evalproto import aggregate, evaluate
from .config import TrainConfig, lr_schedule
from .data import discover_pairs, load_sample


@dataclass
class RunManifest:
    config: dict
    code_version: str
    seed: int
    loss_log: str
    checkpoints: list[str] = field(default_factory=list)
    final_step: int = 0
    stopped_early: bool = False
    best_fscore: float = 0.0

    def write(self, path):
        Path(path).write_text(json.dumps(self.__dict__, indent=2), encoding="utf-8")


def sample_indices(seed: int, step: int, batch_size: int, n_images: int) -> np.ndarray:
    """Image indices for one step; a pure function of the seed material."""
    rng = np.random.default_rng([seed, step])
    return rng.integers(0, n_images, size=batch_size)


def crop_rng(seed: int, step: int, slot: int) -> np.random.Generator:
    return np.random.default_rng([seed, step, slot])


def plan_epoch(seed: int, steps: int, batch_size: int, n_images: int) -> np.ndarray:
    """The (steps, batch) image index plan; used to verify replayability."""
    return np.stack(
        [sample_indices(seed, s, batch_size, n_images) for s in range(steps)]
    )


class _SampleCache:
    """Keeps decoded images + annotations; datasets here fit in memory."""

    def __init__(self, pairs, max_side):
        self.pairs = pairs
        self.max_side = max_side
        self._cache: dict[int, tuple] = {}

    def __len__(self):
        return len(self.pairs)

    def __getitem__(self, idx: int):
        if idx not in self._cache:
            self._cache[idx] = load_sample(self.pairs[idx], self.max_side)
        return self._cache[idx]


def _make_batch(cache: _SampleCache, cfg: TrainConfig, step: int):
    images, scores, geos, masks = [], [], [], []
    indices = sample_indices(cfg.seed, step, cfg.batch_size, len(cache))
    for slot, idx in enumerate(indices):
        image, annotations = cache[int(idx)]
        crop, anns = sample_crop(
            image, annotations, cfg.crop_size, crop_rng(cfg.seed, step, slot)
        )
        target = build_targets(
            anns, (cfg.crop_size, cfg.crop_size), OUTPUT_STRIDE, shrink=cfg.shrink
        )
        images.append(image_to_tensor(crop)[0])
        scores.append(torch.from_numpy(target.score))
        geos.append(torch.from_numpy(target.geometry))
        masks.append(torch.from_numpy(target.mask))
    return (
        torch.stack(images),
        torch.stack(scores),
        torch.stack(geos),
        torch.stack(masks),
    )


def validate(model: TextDetector, cache: _SampleCache, cfg: TrainConfig) -> float:
    """Dataset F-score of full-image inference over a sample cache."""
    nms_cfg = NmsConfig(cfg.score_threshold, cfg.nms_iou_threshold)
    per_image = []
    for idx in range(len(cache)):
        image, annotations = cache[idx]
        out = model.predict(image)
        dets = apply_nms(decode_predictions(out, nms_cfg), nms_cfg, cfg.use_native_nms)
        per_image.append(evaluate(dets, annotations))
    return aggregate(per_image).fscore


def run_training(
    cfg: TrainConfig,
    out_dir,
    resume: str | None = None,
    log_every: int = 10,
    echo=lambda msg: None,
) -> RunManifest:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    pairs = discover_pairs(cfg.train_images, cfg.train_gts)
    train_cache = _SampleCache(pairs, cfg.max_ingest_side)
    if cfg.val_images and cfg.val_gts:
        val_cache = _SampleCache(discover_pairs(cfg.val_images, cfg.val_gts), cfg.max_ingest_side)
    else:
        val_cache = train_cache

    torch.manual_seed(cfg.seed)
    model = TextDetector(cfg.model)
    optimizer = torch.optim.Adagrad(model.parameters(), lr=cfg.initial_lr)

    start_step = 0
    if resume:
        ckpt = load_checkpoint(resume)
        restore_model(model, ckpt)
        if ckpt["opt_blob"]:
            from ..network.model import restore_optimizer

            restore_optimizer(optimizer, ckpt)
        start_step = int(ckpt["meta"]["step"])
        echo(f"resumed from {resume} at step {start_step}")

    manifest = RunManifest(
        config=cfg.to_dict(),
        code_version=__version__,
        seed=cfg.seed,
        loss_log=str(out_dir / "losses.jsonl"),
    )
    weights = LossWeights()
    best_f, rounds_since_best = -1.0, 0
    stopped_early = False
    log_mode = "a" if start_step else "w"
    step = start_step

    with open(manifest.loss_log, log_mode, encoding="utf-8") as log:
        model.train()
        for step in range(start_step, cfg.steps):
            lr = lr_schedule(step, cfg)
            for group in optimizer.param_groups:
                group["lr"] = lr
            x, gt_score, gt_geo, gt_mask = _make_batch(train_cache, cfg, step)
            pred_score, pred_geo = model(x)
            report = total_loss(
                pred_score[:, 0],
                pred_geo.permute(0, 2, 3, 1),
                gt_score,
                gt_geo,
                gt_mask,
                weights,
            )
            optimizer.zero_grad()
            report.total.backward()
            optimizer.step()

            record = {"step": step, "lr": lr, **report.to_dict()}
            log.write(json.dumps(record) + "\n")
            if log_every and step % log_every == 0:
                echo(
                    f"step {step} lr {lr:.2e} total {record['total']:.4f} "
                    f"dice {record['score_loss']:.4f} geo {record['geo_loss']:.4f}"
                )

            done = step + 1 == cfg.steps
            if (step + 1) % cfg.checkpoint_every == 0 or done:
                ckpt_path = out_dir / f"ckpt_{step + 1:07d}.npz"
                save_checkpoint(ckpt_path, model, step=step + 1, optimizer=optimizer)
                manifest.checkpoints.append(str(ckpt_path))
            if (step + 1) % cfg.eval_every == 0 or done:
                fscore = validate(model, val_cache, cfg)
                model.train()
                echo(f"eval @ step {step + 1}: F = {fscore:.4f}")
                if fscore > best_f:
                    best_f, rounds_since_best = fscore, 0
                    save_checkpoint(out_dir / "best.npz", model, step=step + 1,
                                    optimizer=optimizer)
                else:
                    rounds_since_best += 1
                    if rounds_since_best >= cfg.patience:
                        echo(f"early stop: no F improvement in {cfg.patience} rounds")
                        stopped_early = True
                        break

    manifest.final_step = step + 1
    manifest.stopped_early = stopped_early
    manifest.best_fscore = max(best_f, 0.0)
    manifest.write(out_dir / "manifest.json")
    _plot_losses(manifest.loss_log, out_dir / "loss_curve.png")
    return manifest


def _plot_losses(log_path, fig_path):
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    steps, totals, dices, geos = [], [], [], []
    with open(log_path, "r", encoding="utf-8") as fh:
        for line in fh:
            rec = json.loads(line)
            steps.append(rec["step"])
            totals.append(rec["total"])
            dices.append(rec["score_loss"])
            geos.append(rec["geo_loss"])
    if not steps:
        return
    fig, ax = plt.subplots(figsize=(7, 4))
    ax.plot(steps, totals, label="total")
    ax.plot(steps, dices, label="score (dice)")
    ax.plot(steps, geos, label="geometry")
    ax.set_xlabel("step")
    ax.set_ylabel("loss")
    ax.legend()
    fig.tight_layout()
    fig.savefig(fig_path, dpi=120)
    plt.close(fig)
