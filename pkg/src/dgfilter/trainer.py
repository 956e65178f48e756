"""Alternating conditional-GAN training with checkpointing.

Every iteration draws its batch and dropout seed from ``(seed, iteration)``
alone, so a run resumed from a checkpoint replays the uninterrupted run
exactly.
"""
from __future__ import annotations

import json
import logging
import math
import time
from pathlib import Path
from typing import Callable, List, Optional

import numpy as np

from . import imageio, metrics
from .autograd import Tensor, no_grad
from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .config import RunConfig
from .discriminator import Discriminator
from .generator import Generator, GeneratorConfig
from .losses import (FeatureExtractor, LossWeights, gan_discriminator_loss,
                     gan_generator_loss_conditional, l1_loss, net_loss, perceptual_loss)
from .optim import SGD, Adam

log = logging.getLogger(__name__)


class TrainingAborted(RuntimeError):
    def __init__(self, message, diagnostic_path=None):
        super().__init__(message)
        self.diagnostic_path = diagnostic_path


def build_extractor(cfg) -> FeatureExtractor:
    if cfg.extractor == "external":
        return FeatureExtractor.from_checkpoint(cfg.extractor_path)
    return FeatureExtractor(cfg.extractor)


def generator_from_checkpoint(ckpt: Checkpoint) -> Generator:
    """Rebuild the generator described by a checkpoint and load its weights."""
    gcfg = ckpt.config.get("run", {}).get("generator")
    if gcfg is None:
        raise ValueError("checkpoint has no generator configuration")
    gen = Generator(GeneratorConfig(**gcfg))
    gen.load_state_dict(ckpt.subset("generator."))
    return gen


class Trainer:
    def __init__(self, run: RunConfig, blurred: np.ndarray, sharp: np.ndarray,
                 resume: Optional[Checkpoint] = None):
        self.run = run
        tc = run.train.validate()
        self.blurred = np.asarray(blurred, dtype=np.float32)
        self.sharp = np.asarray(sharp, dtype=np.float32)
        if self.blurred.shape != self.sharp.shape or len(self.blurred) == 0:
            raise ValueError("training data must be a non-empty set of equally shaped pairs")
        self.generator = Generator(run.generator, rng_seed=[tc.seed, 1])
        self.discriminator = Discriminator(run.generator.image_channels, rng_seed=[tc.seed, 2],
                                           leaky_slope=run.generator.leaky_slope,
                                           instance_norm=tc.disc_instance_norm)
        self.extractor = build_extractor(tc)
        self.weights = LossWeights(k1=tc.k1, k2=tc.k2, gan=tc.gan_weight)
        self.opt_g = Adam(self.generator.parameters(), tc.lr, tc.beta1, tc.beta2, tc.adam_eps)
        self.opt_d = Adam(self.discriminator.parameters(), tc.lr, tc.beta1, tc.beta2, tc.adam_eps)
        self.sgd_g = SGD(self.generator.parameters(), tc.lr)
        self.sgd_d = SGD(self.discriminator.parameters(), tc.lr)
        self.iteration = 0
        if resume is not None:
            self.load(resume)

    # -- state --------------------------------------------------------------
    @property
    def uses_gan(self) -> bool:
        return self.weights.gan > 0

    def checkpoint(self) -> Checkpoint:
        ckpt = Checkpoint(iteration=self.iteration)
        ckpt.tensors.update(self.generator.state_dict())
        ckpt.tensors.update(self.discriminator.state_dict())
        ckpt.tensors.update(self.opt_g.state_tensors("optim.generator"))
        ckpt.tensors.update(self.opt_d.state_tensors("optim.discriminator"))
        ckpt.config = {"run": self.run.to_dict(),
                       "optimizer_steps": {"generator": self.opt_g.t, "discriminator": self.opt_d.t}}
        return ckpt

    def load(self, ckpt: Checkpoint):
        self.generator.load_state_dict(ckpt.subset("generator."))
        self.discriminator.load_state_dict(ckpt.subset("discriminator."))
        steps = ckpt.config.get("optimizer_steps", {})
        self.opt_g.load_state_tensors("optim.generator", ckpt.tensors, steps.get("generator", 0))
        self.opt_d.load_state_tensors("optim.discriminator", ckpt.tensors, steps.get("discriminator", 0))
        self.iteration = ckpt.iteration

    # -- one iteration ----------------------------------------------------
    def _batch(self, it: int):
        rng = np.random.default_rng([self.run.train.seed, it])
        n, bs = len(self.blurred), self.run.train.batch_size
        idx = rng.choice(n, size=bs, replace=bs > n)
        dropout_seed = int(rng.integers(0, 2 ** 32 - 1))
        return idx, dropout_seed

    def step(self, on_d_step: Optional[Callable] = None) -> dict:
        it = self.iteration
        tc = self.run.train
        idx, dropout_seed = self._batch(it)
        blurred, sharp = Tensor(self.blurred[idx]), Tensor(self.sharp[idx])
        use_sgd = tc.sgd_after is not None and it >= tc.sgd_after
        opt_g = self.sgd_g if use_sgd else self.opt_g
        opt_d = self.sgd_d if use_sgd else self.opt_d

        self.generator.zero_grad()
        fake = self.generator(blurred, training=True, rng_seed=dropout_seed)
        record = {"iter": it}

        if self.uses_gan:
            self.discriminator.zero_grad()
            loss_d = gan_discriminator_loss(self.discriminator(blurred, sharp),
                                            self.discriminator(blurred, fake.detach()))
            loss_d.backward()
            if on_d_step is not None:
                on_d_step(self)
            self._check_finite({"loss_d": loss_d.item()}, blurred, sharp)
            opt_d.step()
            record["loss_d"] = loss_d.item()
            gan = gan_generator_loss_conditional(self.discriminator(blurred, fake))
        else:
            gan = 0.0
        percep = perceptual_loss(self.extractor, sharp, fake) if self.weights.k1 > 0 else 0.0
        l1 = l1_loss(fake, sharp)
        total = net_loss(gan, percep, l1, self.weights)
        self.generator.zero_grad()
        total.backward()
        parts = {"gan": _value(gan), "percep": _value(percep), "l1": l1.item(), "net": total.item()}
        self._check_finite(parts, blurred, sharp)
        opt_g.step()
        record.update(parts)
        self.iteration += 1
        return record

    def _check_finite(self, values: dict, blurred: Tensor, sharp: Tensor):
        if all(math.isfinite(v) for v in values.values()):
            return
        path = getattr(self, "out_dir", None)
        diag = None
        if path is not None:
            diag = Path(path) / f"nan_abort_{self.iteration:06d}.npz"
            norms = {p.name: float(np.linalg.norm(p.data))
                     for m in (self.generator, self.discriminator) for p in m.parameters()}
            np.savez(diag, blurred=blurred.data, sharp=sharp.data, losses=json.dumps(values),
                     param_norms=json.dumps(norms))
        raise TrainingAborted(f"non-finite loss at iteration {self.iteration}: {values}", diag)

    # -- evaluation ---------------------------------------------------------
    def train_psnr(self, batch: int = 8) -> dict:
        """Mean 8-bit luma PSNR of generator output and of the blurred input vs sharp."""
        out = []
        with no_grad():
            for s in range(0, len(self.blurred), batch):
                out.append(self.generator.infer(self.blurred[s:s + batch]))
        out = np.concatenate(out)
        gen_scores, blur_scores = [], []
        for o, b, t in zip(out, self.blurred, self.sharp):
            ref = imageio.unit_to_bytes(t)
            gen_scores.append(metrics.psnr(metrics.to_luma(imageio.unit_to_bytes(o)), metrics.to_luma(ref)))
            blur_scores.append(metrics.psnr(metrics.to_luma(imageio.unit_to_bytes(b)), metrics.to_luma(ref)))
        return {"train_psnr": float(np.mean(gen_scores)), "blurred_psnr": float(np.mean(blur_scores))}

    # -- loop -----------------------------------------------------------------
    def train(self, iterations: int, out_dir=None, log_path=None, resumed: bool = False) -> List[dict]:
        """Run until ``iterations`` total iterations have been completed."""
        tc = self.run.train
        self.out_dir = Path(out_dir) if out_dir is not None else None
        if self.out_dir is not None:
            self.out_dir.mkdir(parents=True, exist_ok=True)
            if not resumed:
                self.save(self.out_dir / checkpoint_name(self.iteration))
        records = []
        log_fh = open(log_path, "a") if log_path else None
        try:
            while self.iteration < iterations:
                rec = self.step()
                if tc.eval_every and self.iteration % tc.eval_every == 0:
                    rec.update(self.train_psnr())
                rec["timestamp"] = time.time()
                records.append(rec)
                if log_fh:
                    log_fh.write(json.dumps(rec) + "\n")
                    log_fh.flush()
                if self.out_dir is not None and (
                        (tc.checkpoint_every and self.iteration % tc.checkpoint_every == 0)
                        or self.iteration == iterations):
                    self.save(self.out_dir / checkpoint_name(self.iteration))
                log.debug("iter %d %s", rec["iter"], rec)
        finally:
            if log_fh:
                log_fh.close()
        return records

    def save(self, path):
        ckpt = self.checkpoint()
        save_checkpoint(ckpt, path)
        save_checkpoint(ckpt, Path(path).parent / "latest.dgf")


def checkpoint_name(iteration: int) -> str:
    return f"ckpt_{iteration:06d}.dgf"


def _value(x) -> float:
    return x.item() if isinstance(x, Tensor) else float(x)


def train_loop(run: RunConfig, out_dir=None, log_path=None, resume_path=None) -> Trainer:
    """Load the dataset named in ``run.train.data``, train, and return the trainer."""
    from .blur import load_dataset

    if not run.train.data:
        raise ValueError("train.data must name a dataset directory")
    _, blurred, sharp = load_dataset(run.train.data)
    resume = load_checkpoint(resume_path) if resume_path else None
    trainer = Trainer(run, blurred, sharp, resume=resume)
    trainer.train(run.train.iterations, out_dir, log_path, resumed=resume is not None)
    return trainer
