"""Conditional-VAE grasp proposal generator conditioned on point-cloud features.

A shared per-point MLP with coordinate-wise max pooling (a miniature
point-feature encoder) produces a fixed-length, permutation-invariant cloud
feature F. The encoder maps (grasp, F) to a diagonal Gaussian posterior over
the latent z; the decoder reconstructs the 22-dim grasp from (z, F). Training
maximizes the evidence lower bound: squared-error reconstruction plus a
closed-form KL to the standard-normal prior, weighted by beta.

All three networks train jointly end to end with Adam.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import nets
from .errors import InsufficientPoints, NumericalError, TrainingDiverged
from .grasp import GRASP_DIM, GraspPose
from .kinematics import HandGeometry


@dataclass
class GeneratorConfig:
    feature_dim: int = 64
    point_hidden: tuple = (32,)
    latent_dim: int = 16
    encoder_hidden: tuple = (128, 128)
    decoder_hidden: tuple = (128, 128)
    beta: float = 1.0
    # pos / rot / joint sub-block weights in the reconstruction error
    recon_weights: tuple = (1.0, 1.0, 1.0)
    min_points: int = 16
    lr: float = 1e-3
    epochs: int = 300
    batch_size: int = 32
    hand_joint_limits: np.ndarray = field(
        default_factory=lambda: HandGeometry().joint_limits)

    def recon_weight_vector(self) -> np.ndarray:
        w_pos, w_rot, w_joint = self.recon_weights
        return np.concatenate([np.full(3, w_pos), np.full(3, w_rot), np.full(16, w_joint)])


class GraspGenerator:
    """Point encoder + CVAE encoder/decoder with shared parameter handling."""

    def __init__(self, config: GeneratorConfig, rng: np.random.Generator):
        self.config = config
        c = config
        self.point_net = nets.Mlp.create([3, *c.point_hidden, c.feature_dim], rng,
                                         hidden="relu", output="relu")
        self.encoder = nets.Mlp.create(
            [GRASP_DIM + c.feature_dim, *c.encoder_hidden, 2 * c.latent_dim], rng)
        self.decoder = nets.Mlp.create(
            [c.latent_dim + c.feature_dim, *c.decoder_hidden, GRASP_DIM], rng)

    # -- parameter plumbing -------------------------------------------------
    def param_arrays(self) -> list[np.ndarray]:
        return (self.point_net.param_arrays() + self.encoder.param_arrays()
                + self.decoder.param_arrays())

    def set_param_arrays(self, arrays: list[np.ndarray]) -> None:
        n_pn = 2 * len(self.point_net.weights)
        n_enc = 2 * len(self.encoder.weights)
        self.point_net.set_param_arrays(arrays[:n_pn])
        self.encoder.set_param_arrays(arrays[n_pn:n_pn + n_enc])
        self.decoder.set_param_arrays(arrays[n_pn + n_enc:])

    def _split_params(self, params: list):
        n_pn = 2 * len(self.point_net.weights)
        n_enc = 2 * len(self.encoder.weights)
        return params[:n_pn], params[n_pn:n_pn + n_enc], params[n_pn + n_enc:]

    def arch(self) -> dict:
        c = self.config
        return {
            "kind": "cvae",
            "feature_dim": c.feature_dim,
            "point_hidden": list(c.point_hidden),
            "latent_dim": c.latent_dim,
            "encoder_hidden": list(c.encoder_hidden),
            "decoder_hidden": list(c.decoder_hidden),
        }

    # -- inference ----------------------------------------------------------
    def encode_pointcloud(self, cloud: np.ndarray) -> np.ndarray:
        """Permutation-invariant cloud feature: per-point MLP then max pool."""
        pts = np.asarray(cloud, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[0] < self.config.min_points:
            raise InsufficientPoints(
                f"need at least {self.config.min_points} points, got {pts.shape}")
        per_point = self.point_net.forward(pts)
        return per_point.max(axis=0)

    def sample_grasps(self, feature: np.ndarray, n: int, rng: np.random.Generator) -> list[GraspPose]:
        """Decode n grasps from prior samples; joints clamped into limits."""
        z = rng.standard_normal((n, self.config.latent_dim))
        f_rep = np.broadcast_to(feature, (n, feature.size))
        out = self.decoder.forward(np.concatenate([z, f_rep], axis=1))
        lims = self.config.hand_joint_limits
        return [GraspPose.from_vector(v).clamped(lims) for v in out]

    # -- training losses ----------------------------------------------------
    def elbo_terms(self, g_batch: np.ndarray, features: np.ndarray, eps: np.ndarray,
                   params: list | None = None):
        """Loss graph for a batch: (loss, recon, kl) as Tensors.

        `features` rows may be plain arrays (frozen features) or Tensors from
        :meth:`encode_tensor` stacked by the caller. `eps` is the fixed
        reparameterization noise, (batch, latent).
        """
        own = params is None
        if own:
            params = nets.param_tensors(self.param_arrays())
        _, enc_p, dec_p = self._split_params(params)
        g_t = nets.Tensor(g_batch)
        f_t = features if isinstance(features, nets.Tensor) else nets.Tensor(features)
        latent = self.config.latent_dim

        enc_out = self.encoder.apply(nets.concat_cols([g_t, f_t]), enc_p)
        mu = nets.slice_cols(enc_out, 0, latent)
        logvar = nets.slice_cols(enc_out, latent, 2 * latent)
        sigma = nets.exp(nets.mul(logvar, 0.5))
        z = nets.add(mu, nets.mul(sigma, nets.Tensor(eps)))

        recon = self.decoder.apply(nets.concat_cols([z, f_t]), dec_p)
        w = nets.Tensor(self.config.recon_weight_vector())
        err = nets.sub(recon, g_t)
        recon_term = nets.tmean(nets.tsum(nets.mul(nets.square(err), w), axis=1))
        # 0.5 * sum(mu^2 + sigma^2 - 1 - logvar); expm1 keeps it >= 0 in floats
        kl_each = nets.add(nets.square(mu), nets.sub(nets.expm1(logvar), logvar))
        kl_term = nets.mul(nets.tmean(nets.tsum(kl_each, axis=1)), 0.5)
        loss = nets.add(recon_term, nets.mul(kl_term, self.config.beta))
        return loss, recon_term, kl_term

    def encode_tensor(self, cloud: np.ndarray, params: list) -> nets.Tensor:
        """Autodiff version of encode_pointcloud sharing the same parameters."""
        pn_p, _, _ = self._split_params(params)
        per_point = self.point_net.apply(nets.Tensor(np.asarray(cloud, float)), pn_p)
        return nets.max_rows(per_point)

    def cvae_loss(self, grasp: GraspPose, feature: np.ndarray,
                  rng: np.random.Generator):
        """ELBO terms for a single grasp: (loss, recon_term, kl_term) floats."""
        eps = rng.standard_normal((1, self.config.latent_dim))
        loss, recon, kl = self.elbo_terms(grasp.to_vector()[None, :],
                                          feature[None, :], eps)
        vals = float(loss.data), float(recon.data), float(kl.data)
        if not all(np.isfinite(v) for v in vals):
            raise NumericalError("non-finite ELBO")
        return vals


def train_generator(dataset, config: GeneratorConfig, seed: int):
    """Train on the valid entries of a grasp dataset; returns (generator, log).

    The log is one dict per epoch with mean loss / recon / kl. Raises
    TrainingDiverged (with the epoch index) if the loss goes non-finite.
    """
    rng = nets.rng_for(seed, "generator-init")
    batch_rng = nets.rng_for(seed, "generator-batches")
    gen = GraspGenerator(config, rng)

    rows = [(e.object_id, e.grasp.to_vector()) for e in dataset.entries if e.valid]
    if not rows:
        raise TrainingDiverged("dataset has no valid entries", epoch=0)
    object_ids = sorted(dataset.clouds)
    clouds = {oid: np.asarray(dataset.clouds[oid], dtype=np.float64) for oid in object_ids}
    g_all = np.stack([r[1] for r in rows])
    obj_of_row = np.array([object_ids.index(r[0]) for r in rows])

    flat = nets.pack(gen.param_arrays())
    state = nets.AdamState.for_size(flat.size)
    like = gen.param_arrays()
    log = []
    n = len(rows)
    for epoch in range(config.epochs):
        order = batch_rng.permutation(n)
        sums = np.zeros(3)
        batches = 0
        for start in range(0, n, config.batch_size):
            idx = order[start:start + config.batch_size]
            g_batch = g_all[idx]
            eps = batch_rng.standard_normal((len(idx), config.latent_dim))

            params = nets.param_tensors(nets.unpack(flat, like))
            feats = {}
            for oid_idx in np.unique(obj_of_row[idx]):
                feats[oid_idx] = gen.encode_tensor(clouds[object_ids[oid_idx]], params)
            f_rows = nets.stack_rows([feats[oi] for oi in obj_of_row[idx]])
            loss, recon, kl = gen.elbo_terms(g_batch, f_rows, eps, params)

            vals = (float(loss.data), float(recon.data), float(kl.data))
            if not all(np.isfinite(v) for v in vals):
                raise TrainingDiverged(f"loss non-finite at epoch {epoch}", epoch=epoch)
            if vals[2] < 0.0:
                raise TrainingDiverged(f"negative KL at epoch {epoch}", epoch=epoch)
            loss.backward()
            grads = nets.pack([p.grad if p.grad is not None else np.zeros_like(p.data)
                               for p in params])
            flat = nets.adam_step(flat, grads, state, lr=config.lr)
            sums += vals
            batches += 1
        log.append({"epoch": epoch, "loss": sums[0] / batches,
                    "recon": sums[1] / batches, "kl": sums[2] / batches})
    gen.set_param_arrays(nets.unpack(flat, like))
    return gen, log


def save_generator(path, gen: GraspGenerator) -> None:
    nets.save_checkpoint(path, gen.arch(), gen.param_arrays())


def load_generator(path, config: GeneratorConfig | None = None) -> GraspGenerator:
    arch, arrays = nets.load_checkpoint(path, expect_kind="cvae")
    config = config or GeneratorConfig()
    config.feature_dim = arch["feature_dim"]
    config.point_hidden = tuple(arch["point_hidden"])
    config.latent_dim = arch["latent_dim"]
    config.encoder_hidden = tuple(arch["encoder_hidden"])
    config.decoder_hidden = tuple(arch["decoder_hidden"])
    gen = GraspGenerator(config, nets.rng_for(0, "generator-load"))
    gen.set_param_arrays(arrays)
    return gen
