"""End-to-end operations behind the command line: train, infer, eval, compare, gradcheck."""
from __future__ import annotations

import sys
import time
from pathlib import Path
from typing import Callable

import numpy as np

from . import tensor as T
from .config import RunConfig
from .data import CaptionProvider, ImageSample, load_dataset
from .errors import ConfigError, FormatError, ModeError
from .io import read_pgm, read_ppm, read_tensor, write_pgm
from .losses import LossWeights
from .metrics import EvalReport, iou, side_by_side
from .model import Segmenter
from .training import StepLog, Trainer


def _printer(log_path: str | None, stream=None) -> Callable[[str], None]:
    stream = stream or sys.stdout
    handle = open(log_path, "a", encoding="utf-8") if log_path else None

    def emit(line: str) -> None:
        print(line, file=stream, flush=True)
        if handle is not None:
            handle.write(line + "\n")
            handle.flush()

    emit.close = handle.close if handle is not None else (lambda: None)
    return emit


def caption_provider(cfg: RunConfig) -> CaptionProvider:
    return CaptionProvider(cfg.caption_mode, root=cfg.dataset or None, seed=cfg.caption_seed,
                           caption_len=cfg.caption_len, caption_dim=cfg.caption_dim,
                           prompt=cfg.prompt)


def load_training_data(cfg: RunConfig):
    if not cfg.dataset or not Path(cfg.dataset).is_dir():
        raise ConfigError(f"dataset directory not found: {cfg.dataset!r}")
    samples = load_dataset(cfg.dataset)
    if not samples:
        raise ConfigError(f"dataset {cfg.dataset} lists no samples")
    size = cfg.image_size
    for s in samples:
        if s.image.shape != (size, size, 3):
            raise ConfigError(f"{s.id}: image is {s.image.shape[:2]}, config expects {size}x{size}")
    provider = caption_provider(cfg)
    captions = [provider(s) for s in samples]
    return samples, captions


def build_trainer(cfg: RunConfig, n_samples: int, model: Segmenter | None = None) -> Trainer:
    total, warmup = cfg.schedule(n_samples)
    return Trainer(model or Segmenter(cfg.model()), LossWeights.profile(cfg.mode), lr=cfg.lr,
                   weight_decay=cfg.weight_decay, total_steps=total, warmup_steps=warmup,
                   batch_size=cfg.batch_size, seed=cfg.seed, hflip=cfg.hflip)


def train(cfg: RunConfig, *, resume: bool = False, emit: Callable[[str], None] | None = None):
    """Train per ``cfg``; writes ``cfg.checkpoint`` and returns the trainer."""
    samples, captions = load_training_data(cfg)
    trainer = build_trainer(cfg, len(samples))
    own = emit is None
    emit = emit or _printer(cfg.log or None)
    state = Path(f"{cfg.checkpoint}.state")
    try:
        if resume:
            if not state.exists():
                raise ConfigError(f"no training state to resume from at {state}")
            trainer.load_state(state)
            emit(f"resumed at step={trainer.step}")
        emit(f"training {len(samples)} samples for {trainer.total_steps} steps "
             f"(warm-up {trainer.warmup_steps}, batch {trainer.batch_size}, mode {cfg.mode})")

        def on_step(log: StepLog) -> None:
            emit(log.line())

        trainer.run(samples, captions, on_step=on_step, checkpoint_every=cfg.checkpoint_every,
                    checkpoint_path=cfg.checkpoint)
        trainer.model.save(cfg.checkpoint)
        emit(f"wrote {cfg.checkpoint}")
    finally:
        if own:
            emit.close()
    return trainer


# -- inference -------------------------------------------------------------
def predict(model: Segmenter, image: np.ndarray, mode: str, caption=None) -> np.ndarray:
    """Foreground probabilities for one image."""
    if mode not in ("caption", "codebook"):
        raise ModeError(f"inference mode must be 'caption' or 'codebook', got {mode!r}")
    if mode == "caption" and caption is None:
        raise ModeError("caption mode needs a caption embedding file (--caption)")
    with T.no_grad():
        out = model(image, caption if mode == "caption" else None, mode=mode)
        return T.sigmoid(out.logits).data


def predict_samples(model: Segmenter, samples, mode: str, provider: CaptionProvider | None = None):
    """Codebook mode never touches ``provider``."""
    preds = []
    for s in samples:
        caption = provider(s) if mode == "caption" else None
        preds.append(predict(model, s.image, mode, caption))
    return preds


def infer(checkpoint, image_path, mode: str, out, caption_path=None,
          emit: Callable[[str], None] = print) -> float:
    if mode == "caption" and caption_path is None:
        raise ModeError("caption mode needs a caption embedding file (--caption)")
    model = Segmenter.load(checkpoint)
    image = read_ppm(image_path)
    caption = read_tensor(caption_path).astype(np.float64) if mode == "caption" else None
    start = time.perf_counter()
    prob = predict(model, image, mode, caption)
    elapsed = time.perf_counter() - start
    write_pgm(out, prob)
    emit(f"{Path(image_path).name}: mode={mode} wall_clock={elapsed * 1000:.1f} ms -> {out}")
    return elapsed


# -- evaluation ------------------------------------------------------------
def _pgm_ids(directory: Path) -> dict:
    return {p.name[:-4]: p for p in sorted(directory.glob("*.pgm"))}


def evaluate(pred_dir, gt_dir) -> EvalReport:
    """Score ``<id>.pgm`` predictions against ground truth masks.

    ``gt_dir`` may be a dataset root (masks under ``masks/``) or a flat directory.
    """
    pred_dir, gt_dir = Path(pred_dir), Path(gt_dir)
    for d in (pred_dir, gt_dir):
        if not d.is_dir():
            raise ConfigError(f"not a directory: {d}")
    if (gt_dir / "masks").is_dir():
        gt_dir = gt_dir / "masks"
    preds, gts = _pgm_ids(pred_dir), _pgm_ids(gt_dir)
    missing_pred = sorted(set(gts) - set(preds))
    missing_gt = sorted(set(preds) - set(gts))
    if missing_pred or missing_gt:
        parts = []
        if missing_pred:
            parts.append(f"no prediction for: {', '.join(missing_pred)}")
        if missing_gt:
            parts.append(f"no ground truth for: {', '.join(missing_gt)}")
        raise FormatError("id mismatch; " + "; ".join(parts))
    if not gts:
        raise ConfigError(f"no .pgm masks found in {gt_dir}")
    report = EvalReport()
    for image_id in sorted(gts):
        pred = read_pgm(preds[image_id]) / 255.0
        gt = read_pgm(gts[image_id]) > 127
        if pred.shape != gt.shape:
            raise FormatError(f"{image_id}: prediction {pred.shape} vs ground truth {gt.shape}")
        report.add(image_id, pred, gt)
    return report


def compare_modes(model: Segmenter, samples: list[ImageSample], provider: CaptionProvider,
                  out_dir=None) -> dict:
    """Caption-mode and codebook-mode reports plus their mask agreement (IoU)."""
    cap = predict_samples(model, samples, "caption", provider)
    before = provider.calls
    book = predict_samples(model, samples, "codebook", provider)
    reports = {"caption": EvalReport(), "codebook": EvalReport()}
    agreement = []
    for s, pc, pb in zip(samples, cap, book):
        reports["caption"].add(s.id, pc, s.mask)
        reports["codebook"].add(s.id, pb, s.mask)
        agreement.append(iou(pb, pc >= 0.5))
        if out_dir is not None:
            for mode, p in (("caption", pc), ("codebook", pb)):
                d = Path(out_dir) / mode
                d.mkdir(parents=True, exist_ok=True)
                write_pgm(d / f"{s.id}.pgm", p)
    return {"reports": reports, "parity": float(np.mean(agreement)),
            "codebook_provider_calls": provider.calls - before,
            "table": side_by_side(reports)}


def compare(checkpoint, dataset, caption_mode: str = "file", caption_seed: int = 0,
            out_dir=None, emit: Callable[[str], None] = print) -> dict:
    model = Segmenter.load(checkpoint)
    samples = load_dataset(dataset)
    provider = CaptionProvider(caption_mode, root=dataset, seed=caption_seed,
                               caption_len=model.cfg.caption_len, caption_dim=model.cfg.caption_dim)
    result = compare_modes(model, samples, provider, out_dir)
    emit(result["table"])
    emit(f"codebook-vs-caption mask IoU={result['parity']:.4f} "
         f"(caption provider calls in codebook mode: {result['codebook_provider_calls']})")
    return result
