"""
Straight-line evaluation of the classifier with forward- and reverse-mode sweeps.

One batched forward pass records a ``Tape`` (layer inputs, pre-norm values,
ReLU masks, logits, softmax). Both sweeps read the same tape:

* the reverse sweep pulls a logit cotangent back to every parameter, either
  summed over the batch (vector-Jacobian products) or kept per sample;
* the tangent sweep pushes parameter directions forward as the dual half of
  each intermediate, its primal half being the taped value.

Because both sweeps differentiate the identical evaluation, ⟨Gv, u⟩ and
⟨v, Gᵀu⟩ agree to rounding.

The energy E(x;θ) = −logsumexp f_θ(x) has dE/df = −softmax(f), so energy
gradients are reverse sweeps seeded with −p and energy directional
derivatives are tangent sweeps contracted with −p.
"""

from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray
from scipy.special import softmax

from grad_subspace_ood.config import get_settings
from grad_subspace_ood.micronet.model import (
    FloatArray,
    LayerParams,
    ModelSpec,
    ParamVector,
    SampleBatch,
    unpack_layers,
)
from grad_subspace_ood.utils.errors import ConfigurationError, UsageError
from grad_subspace_ood.utils.parallel import chunk_slices, ordered_map


@dataclass(frozen=True)
class Tape:
    """Primal values recorded by one batched forward pass."""

    layer_inputs: list[FloatArray]  # h_0 (inputs) .. h_{L-1} (penultimate)
    pre_norm: list[FloatArray]  # affine outputs a_l of hidden layers
    masks: list[NDArray[np.bool_]]  # ReLU masks z_l > 0 of hidden layers
    logits: FloatArray
    probs: FloatArray


def record_tape(layers: list[LayerParams], inputs: FloatArray) -> Tape:
    """Run the forward pass and keep every intermediate the sweeps need."""
    layer_inputs: list[FloatArray] = []
    pre_norm: list[FloatArray] = []
    masks: list[NDArray[np.bool_]] = []
    h = inputs
    for p in layers[:-1]:
        layer_inputs.append(h)
        a = h @ p.weight.T + p.bias
        z = a * p.norm_scale + p.norm_shift if p.norm_scale is not None else a
        # ReLU subgradient at 0 is 0
        mask = z > 0.0
        pre_norm.append(a)
        masks.append(mask)
        h = np.where(mask, z, 0.0)
    layer_inputs.append(h)
    last = layers[-1]
    logits = h @ last.weight.T + last.bias
    return Tape(layer_inputs, pre_norm, masks, logits, softmax(logits, axis=1))


def reverse_sweep(
    spec: ModelSpec,
    layers: list[LayerParams],
    tape: Tape,
    seed: FloatArray,
    per_sample: bool,
) -> FloatArray:
    """
    Pull a logit cotangent back to the parameters.

    Args:
        seed: Cotangent of the logits, shape (n, K, C)
        per_sample: Keep the batch axis instead of summing over it

    Returns:
        FloatArray: (K, |θ|) when summed, (n, K, |θ|) per sample
    """
    out = "nk" if per_sample else "k"
    grads: dict[str, FloatArray] = {}
    delta = seed
    for layer in reversed(range(spec.num_layers)):
        p = layers[layer]
        prefix = f"layer{layer}."
        if layer < spec.num_layers - 1:
            dz = delta * tape.masks[layer][:, None, :]
            if p.norm_scale is not None:
                grads[prefix + "norm_scale"] = np.einsum(
                    f"nko,no->{out}o", dz, tape.pre_norm[layer]
                )
                grads[prefix + "norm_shift"] = dz if per_sample else dz.sum(axis=0)
                da = dz * p.norm_scale
            else:
                da = dz
        else:
            da = delta
        grads[prefix + "weight"] = np.einsum(
            f"nko,ni->{out}oi", da, tape.layer_inputs[layer]
        )
        grads[prefix + "bias"] = da if per_sample else da.sum(axis=0)
        if layer > 0:
            delta = np.einsum("nko,oi->nki", da, p.weight)
    lead = seed.shape[:2] if per_sample else seed.shape[1:2]
    return np.concatenate(
        [
            grads[entry.name].reshape(lead + (entry.length,))
            for entry in spec.manifest()
        ],
        axis=-1,
    )


def tangent_sweep(
    spec: ModelSpec, layers: list[LayerParams], tape: Tape, directions: FloatArray
) -> FloatArray:
    """
    Push K parameter directions through the taped evaluation.

    Args:
        directions: (|θ|, K) matrix of parameter-space directions

    Returns:
        FloatArray: Logit tangents, shape (n, K, C)
    """
    dirs = unpack_layers(spec, np.ascontiguousarray(directions.T))
    h_dot: FloatArray | None = None
    for layer in range(spec.num_layers):
        p, d = layers[layer], dirs[layer]
        a_dot = np.einsum("ni,koi->nko", tape.layer_inputs[layer], d.weight)
        a_dot += d.bias[None, :, :]
        if h_dot is not None:
            a_dot += np.einsum("nki,oi->nko", h_dot, p.weight)
        if layer == spec.num_layers - 1:
            return a_dot
        if p.norm_scale is not None:
            assert d.norm_scale is not None and d.norm_shift is not None
            z_dot = (
                a_dot * p.norm_scale
                + tape.pre_norm[layer][:, None, :] * d.norm_scale[None, :, :]
                + d.norm_shift[None, :, :]
            )
        else:
            z_dot = a_dot
        h_dot = z_dot * tape.masks[layer][:, None, :]
    raise ConfigurationError("model has no layers")


def _prepare(
    spec: ModelSpec, params: ParamVector, batch: SampleBatch
) -> list[LayerParams]:
    batch.check_against(spec)
    if params.size != spec.num_params:
        raise ConfigurationError(
            f"params have {params.size} values, spec needs {spec.num_params}"
        )
    return params.unpack(spec)


def _resolve(chunk_size: int | None, threads: int | None) -> tuple[int, int]:
    settings = get_settings()
    return chunk_size or settings.CHUNK_SIZE, threads or settings.THREADS


def forward(spec: ModelSpec, params: ParamVector, batch: SampleBatch) -> FloatArray:
    """Logits (n x C) of the classifier."""
    layers = _prepare(spec, params, batch)
    return record_tape(layers, batch.inputs).logits


def penultimate_features(
    spec: ModelSpec, params: ParamVector, batch: SampleBatch
) -> FloatArray:
    """Activations feeding the output layer (the forward embedding)."""
    layers = _prepare(spec, params, batch)
    return record_tape(layers, batch.inputs).layer_inputs[-1]


def per_sample_energy_gradients(
    spec: ModelSpec,
    params: ParamVector,
    batch: SampleBatch,
    chunk_size: int | None = None,
    threads: int | None = None,
) -> FloatArray:
    """Materialized ∇_θE(x_i;θ) for every row, shape (n, |θ|)."""
    layers = _prepare(spec, params, batch)
    size, workers = _resolve(chunk_size, threads)

    def run(rows: slice) -> FloatArray:
        tape = record_tape(layers, batch.inputs[rows])
        seed = -tape.probs[:, None, :]
        return reverse_sweep(spec, layers, tape, seed, per_sample=True)[:, 0, :]

    parts = ordered_map(run, chunk_slices(len(batch), size), workers)
    if not parts:
        return np.zeros((0, spec.num_params))
    return np.concatenate(parts, axis=0)


def per_sample_energy_gradient(
    spec: ModelSpec, params: ParamVector, x: FloatArray
) -> FloatArray:
    """∇_θE(x;θ) = −Σ_y p_θ(y|x)∇_θf^y_θ(x) for a single input."""
    sample = np.asarray(x, dtype=np.float64)
    if sample.ndim != 1:
        raise ConfigurationError("x must be a single input vector")
    return per_sample_energy_gradients(spec, params, SampleBatch(sample[None, :]))[0]


def param_jvp(
    spec: ModelSpec,
    params: ParamVector,
    batch: SampleBatch,
    v: FloatArray,
    chunk_size: int | None = None,
    threads: int | None = None,
) -> FloatArray:
    """
    Directional derivatives of the energy, out[i, j] = ⟨∇_θE(x_i;θ), v_j⟩.

    Computed by a tangent sweep per batch chunk; per-sample gradients are
    never formed.

    Args:
        v: (|θ|, K) directions

    Returns:
        FloatArray: (n, K)
    """
    layers = _prepare(spec, params, batch)
    directions = np.asarray(v, dtype=np.float64)
    if directions.ndim != 2 or directions.shape[0] != spec.num_params:
        raise ConfigurationError(
            f"v must have shape ({spec.num_params}, K), got {directions.shape}"
        )
    if directions.shape[1] < 1:
        raise UsageError("v needs at least one column")
    if not np.all(np.isfinite(directions)):
        raise UsageError("v must be finite")
    size, workers = _resolve(chunk_size, threads)

    def run(rows: slice) -> FloatArray:
        tape = record_tape(layers, batch.inputs[rows])
        logit_dot = tangent_sweep(spec, layers, tape, directions)
        return -np.einsum("nc,nkc->nk", tape.probs, logit_dot)

    parts = ordered_map(run, chunk_slices(len(batch), size), workers)
    if not parts:
        return np.zeros((0, directions.shape[1]))
    return np.concatenate(parts, axis=0)


def param_vjp(
    spec: ModelSpec,
    params: ParamVector,
    batch: SampleBatch,
    weights: FloatArray,
    chunk_size: int | None = None,
    threads: int | None = None,
) -> FloatArray:
    """
    Weighted gradient sums, column j = Σ_i weights[i, j]·∇_θE(x_i;θ).

    One reverse sweep per chunk; chunk partials are added in chunk order.

    Args:
        weights: (n, K) weights

    Returns:
        FloatArray: (|θ|, K)
    """
    layers = _prepare(spec, params, batch)
    w = np.asarray(weights, dtype=np.float64)
    if w.ndim != 2 or w.shape[0] != len(batch):
        raise ConfigurationError(
            f"weights must have shape ({len(batch)}, K), got {w.shape}"
        )
    if not np.all(np.isfinite(w)):
        raise UsageError("weights must be finite")
    size, workers = _resolve(chunk_size, threads)

    def run(rows: slice) -> FloatArray:
        tape = record_tape(layers, batch.inputs[rows])
        seed = -w[rows][:, :, None] * tape.probs[:, None, :]
        return reverse_sweep(spec, layers, tape, seed, per_sample=False)

    total = np.zeros((w.shape[1], spec.num_params))
    for part in ordered_map(run, chunk_slices(len(batch), size), workers):
        total += part
    return total.T.copy()
