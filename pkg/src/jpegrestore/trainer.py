"""Adversarial training loop with discriminator early stop, checkpoints and restoration."""
import hashlib
import json
import logging
import math
import os
import re
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np
import torch

from . import dataset, losses, metrics, nets

log = logging.getLogger(__name__)

CHECKPOINT_FORMAT = "jpegrestore-checkpoint/1"


class TrainingDiverged(RuntimeError):
    def __init__(self, step_metrics):
        self.step_metrics = step_metrics
        super().__init__("non-finite loss: " + json.dumps(step_metrics, default=str))


class CheckpointError(RuntimeError):
    pass


@dataclass
class TrainConfig:
    epochs: int = 30
    batch_size: int = 10
    lr: float = 1e-5
    adam_betas: tuple = (0.5, 0.999)
    d_stop_epoch: int = 10          # None: discriminator trains every epoch
    lambda_adv: float = 1.0
    lambda_lf: float = 20.0
    lambda_hf: float = 0.1
    dropout_rate: float = 0.7
    seed: int = 0
    quality: int = 1
    adv_loss_variant: str = "logless"
    adv_after_stop: bool = True     # keep the adversarial term (frozen D) after the stop
    d_condition: str = "original"   # left half of the D input: "original" or "compressed"
    width: int = 64
    disc_width: int = 64
    image_size: int = 512
    use_hourglass: bool = True
    use_hf_loss: bool = True
    vgg_weights: str = None
    standin_width: int = 8
    eval_each_epoch: bool = True

    def __post_init__(self):
        self.adam_betas = tuple(self.adam_betas)
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.d_stop_epoch is not None and not 0 <= self.d_stop_epoch <= self.epochs:
            raise ValueError(f"d_stop_epoch ({self.d_stop_epoch}) must lie in [0, epochs={self.epochs}]")
        if self.adv_loss_variant not in ("log", "logless"):
            raise ValueError(f"adv_loss_variant must be 'log' or 'logless', got {self.adv_loss_variant!r}")
        if self.d_condition not in ("original", "compressed"):
            raise ValueError(f"d_condition must be 'original' or 'compressed'")
        losses.LossWeights(self.lambda_adv, self.lambda_lf, self.lambda_hf)

    @property
    def weights(self):
        return losses.LossWeights(self.lambda_adv, self.lambda_lf, self.lambda_hf)

    def d_active(self, epoch):
        return self.d_stop_epoch is None or epoch <= self.d_stop_epoch

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def from_file(cls, path, **overrides):
        d = json.loads(Path(path).read_text())
        d.update({k: v for k, v in overrides.items() if v is not None})
        return cls.from_dict(d)


def iterations_per_epoch(n_train, batch_size):
    return math.ceil(n_train / batch_size)


@dataclass
class TrainState:
    generator: nets.Generator
    discriminator: nets.Discriminator
    opt_g: torch.optim.Optimizer
    opt_d: torch.optim.Optimizer
    config: TrainConfig
    extractor: losses.FeatureExtractor = None
    epoch: int = 0                  # last completed epoch
    iteration: int = 0
    history: list = field(default_factory=list)
    eval_history: list = field(default_factory=list)
    best_psnr: float = -math.inf


def _set_threads_deterministic():
    torch.use_deterministic_algorithms(True, warn_only=True)


def make_optimizer(params, cfg):
    return torch.optim.Adam(params, lr=cfg.lr, betas=cfg.adam_betas)


def new_state(cfg):
    _set_threads_deterministic()
    g, d = nets.init_params(cfg.seed, cfg.width, cfg.image_size, cfg.use_hourglass,
                            cfg.dropout_rate, cfg.disc_width)
    opt_g = make_optimizer(g.parameters(), cfg)
    opt_d = make_optimizer(d.parameters(), cfg)
    fe = None
    if cfg.use_hf_loss:
        fe = losses.load_feature_extractor(cfg.vgg_weights, cfg.standin_width, cfg.seed)
    return TrainState(g, d, opt_g, opt_d, cfg, fe)


def param_digest(module):
    h = hashlib.sha256()
    for name, t in module.state_dict().items():
        h.update(name.encode())
        h.update(t.detach().cpu().numpy().tobytes())
    return h.hexdigest()


def batch_tensors(batch, image_size):
    """(x_up, c_up) as N x 3 x S x S float32 tensors in [-1, 1] (upsample, then normalise)."""
    xs, cs = [], []
    for p in batch:
        xs.append(dataset.to_model_range(dataset.upsample_bilinear(p.original, image_size)))
        cs.append(dataset.to_model_range(dataset.upsample_bilinear(p.compressed, image_size)))
    to_t = lambda a: torch.from_numpy(np.stack(a).transpose(0, 3, 1, 2).astype(np.float32))
    return to_t(xs), to_t(cs)


def train_step(state, batch, epoch=None):
    """One D update (while the discriminator is active) followed by one G update."""
    cfg = state.config
    epoch = state.epoch + 1 if epoch is None else epoch
    g_net, d_net = state.generator, state.discriminator
    x_up, c_up = batch_tensors(batch, cfg.image_size)
    cond = x_up if cfg.d_condition == "original" else c_up
    d_active = cfg.d_active(epoch)
    g_net.train()
    fake = g_net(c_up, dropout_on=True)

    adv_d = None                    # no discriminator update this step
    if d_active:
        d_net.requires_grad_(True)
        loss_d = losses.adv_loss_d(d_net(cond, x_up), d_net(cond, fake.detach()), cfg.adv_loss_variant)
        state.opt_d.zero_grad(set_to_none=True)
        loss_d.backward()
        state.opt_d.step()
        adv_d = loss_d.item()
    d_net.requires_grad_(False)

    w = cfg.weights
    use_adv = d_active or cfg.adv_after_stop
    adv_g = losses.adv_loss_g(d_net(cond, fake), cfg.adv_loss_variant)
    lf = losses.lf_loss(x_up, fake)
    hf = losses.hf_loss(state.extractor, x_up, fake) if cfg.use_hf_loss else torch.zeros(())
    total = losses.total_loss(losses.LossWeights(w.lambda_adv if use_adv else 0.0,
                                                 w.lambda_lf, w.lambda_hf if cfg.use_hf_loss else 0.0),
                              adv_g, lf, hf)
    state.iteration += 1
    step = {"iteration": state.iteration, "epoch": epoch, "adv_d": adv_d, "adv_g": adv_g.item(),
            "lf": lf.item(), "hf": hf.item(), "total": total.item(), "d_updated": d_active}
    if not all(math.isfinite(step[k]) for k in ("adv_g", "lf", "hf", "total")) or \
            (d_active and not math.isfinite(adv_d)):
        raise TrainingDiverged(step)
    state.opt_g.zero_grad(set_to_none=True)
    total.backward()
    state.opt_g.step()
    state.history.append(step)
    return state, step


@torch.no_grad()
def restore(generator, compressed, image_size=None):
    """Restore a 128 x 128 x 3 uint8 image: upsample, generate (no dropout), downsample."""
    compressed = np.asarray(compressed)
    if compressed.ndim != 3 or compressed.shape[2] != 3:
        raise ValueError(f"expected H x W x 3 image, got {compressed.shape}")
    size = image_size or generator.image_size
    was_training = generator.training
    generator.eval()
    x = dataset.to_model_range(dataset.upsample_bilinear(compressed, size))
    t = torch.from_numpy(x.transpose(2, 0, 1)[None].astype(np.float32))
    out = generator(t, dropout_on=False)[0].numpy().transpose(1, 2, 0).astype(np.float64)
    generator.train(was_training)
    back = dataset.downsample_to_original(out, compressed.shape[0])
    return np.floor(dataset.from_model_range(back) + 0.5).astype(np.uint8)


def evaluate_pairs(generator, pairs, label="restored", with_vif=True):
    restored = [restore(generator, p.compressed) for p in pairs]
    rows = []
    for p, r in zip(pairs, restored):
        rows.append(metrics.EvalRow(p.source_id, metrics.psnr(p.original, r),
                                    metrics.ssim(p.original, r),
                                    metrics.vif(p.original, r) if with_vif else float("nan")))
    return metrics.EvalReport(rows, label), restored


# ---------------------------------------------------------------- checkpoints

def _atomic_save(obj, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    torch.save(obj, tmp)
    os.replace(tmp, path)


def save_checkpoint(state, path):
    obj = {
        "format": CHECKPOINT_FORMAT,
        "config": asdict(state.config),
        "architecture": {"generator": state.generator.descriptor(),
                         "discriminator": state.discriminator.descriptor(),
                         "extractor": state.extractor.descriptor() if state.extractor else None},
        "generator": state.generator.state_dict(),
        "discriminator": state.discriminator.state_dict(),
        "opt_g": state.opt_g.state_dict(),
        "opt_d": state.opt_d.state_dict(),
        "epoch": state.epoch,
        "iteration": state.iteration,
        "history": state.history,
        "eval_history": state.eval_history,
        "best_psnr": state.best_psnr,
        "rng": torch.get_rng_state(),
    }
    _atomic_save(obj, path)


_REQUIRED = ("format", "config", "generator", "discriminator", "opt_g", "opt_d",
             "epoch", "iteration", "history")


def load_checkpoint(path):
    """Rebuild a TrainState from ``path``; any defect raises CheckpointError."""
    try:
        obj = torch.load(path, map_location="cpu", weights_only=True)
    except FileNotFoundError:
        raise CheckpointError(f"checkpoint not found: {path}") from None
    except Exception as exc:
        raise CheckpointError(f"unreadable checkpoint {path}: {exc}") from exc
    if not isinstance(obj, dict) or any(k not in obj for k in _REQUIRED):
        raise CheckpointError(f"{path} is missing checkpoint fields")
    if obj["format"] != CHECKPOINT_FORMAT:
        raise CheckpointError(f"{path}: unsupported checkpoint format {obj['format']!r}")
    try:
        cfg = TrainConfig.from_dict(obj["config"])
        state = new_state(cfg)
        state.generator.load_state_dict(obj["generator"])
        state.discriminator.load_state_dict(obj["discriminator"])
        state.opt_g.load_state_dict(obj["opt_g"])
        state.opt_d.load_state_dict(obj["opt_d"])
    except Exception as exc:
        raise CheckpointError(f"{path}: inconsistent checkpoint contents: {exc}") from exc
    state.epoch = obj["epoch"]
    state.iteration = obj["iteration"]
    state.history = list(obj["history"])
    state.eval_history = list(obj.get("eval_history", []))
    state.best_psnr = obj.get("best_psnr", -math.inf)
    if "rng" in obj:
        torch.set_rng_state(obj["rng"])
    return state


def load_generator(path):
    return load_checkpoint(path).generator


def latest_checkpoint(ckpt_dir):
    ckpt_dir = Path(ckpt_dir)
    found = sorted(ckpt_dir.glob("epoch_*.pt"),
                   key=lambda p: int(re.search(r"epoch_(\d+)", p.name).group(1)))
    return found[-1] if found else None


# ---------------------------------------------------------------- loop

def _epoch_seed(seed, epoch):
    return int(np.random.SeedSequence([seed, epoch]).generate_state(1)[0])


def run_epoch(state, pairs, on_step=None):
    cfg = state.config
    epoch = state.epoch + 1
    torch.manual_seed(_epoch_seed(cfg.seed, epoch))
    for batch in dataset.iterate_batches(pairs, cfg.batch_size, cfg.seed, epoch):
        _, step = train_step(state, batch, epoch)
        if on_step is not None:
            on_step(step)
    state.epoch = epoch
    return state


def log_step(step):
    log.info(json.dumps({k: step[k] for k in ("iteration", "epoch", "adv_d", "adv_g", "lf", "hf", "total")}))


def train(split, cfg, ckpt_dir=None, resume=True, on_step=log_step, state=None):
    """Train for ``cfg.epochs`` epochs, checkpointing each epoch into ``ckpt_dir``."""
    if state is None:
        last = latest_checkpoint(ckpt_dir) if (ckpt_dir and resume) else None
        if last is not None:
            state = load_checkpoint(last)
            if asdict(state.config) != asdict(cfg):
                log.warning("resuming with the configuration stored in %s", last)
            state.config = cfg
            log.info("resumed from %s at epoch %d", last, state.epoch)
        else:
            state = new_state(cfg)
    if not split.train:
        raise ValueError("training split is empty")
    while state.epoch < cfg.epochs:
        run_epoch(state, split.train, on_step)
        if cfg.eval_each_epoch and split.test:
            report, _ = evaluate_pairs(state.generator, split.test, with_vif=False)
            agg = report.aggregate
            state.eval_history.append({"epoch": state.epoch, "psnr": agg["psnr"], "ssim": agg["ssim"]})
            log.info(json.dumps({"eval_epoch": state.epoch, "psnr": agg["psnr"], "ssim": agg["ssim"]}))
            improved = agg["psnr"] > state.best_psnr
            if improved:
                state.best_psnr = agg["psnr"]
        else:
            improved = False
        if ckpt_dir:
            save_checkpoint(state, Path(ckpt_dir) / f"epoch_{state.epoch:03d}.pt")
            if improved:
                save_checkpoint(state, Path(ckpt_dir) / "best.pt")
    return state
