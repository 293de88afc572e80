"""Differentiable classifiers with exact analytic gradients.

Three reference models back the attribution engines and their tests:

* `LinearSoftmaxModel` -- logits w_c . x + b_c, optionally softmaxed.  With
  softmax disabled it is the linear score model whose path integrals have
  closed forms.
* `QuadraticScoreModel` -- per-class score 0.5 x^T A_c x with symmetric A_c,
  exposed without softmax so the straight-path integral is analytic.
* `TinyConvNet` -- one 3x3 conv (reflection padded), softplus, 2x2 average
  pool, dense layer, softmax.  Softplus keeps the forward map C^2 so Taylor
  error tests behave.

All models evaluate on raw (H, W, C) float64 arrays or `Image` instances and
are immutable once constructed; `predict`/`gradient` are pure.  Batched
variants (`predict_many`, `gradient_many`) evaluate a stack of points in one
vectorized pass, which is what the attribution engines call.
"""

from __future__ import annotations

import numpy as np

from ._binio import Reader, Writer, read_file, write_file
from .errors import InvalidArgumentError, ParseError, UnsupportedVersionError
from .image import Image, as_array

MODEL_MAGIC = b"ATBM"
MODEL_FORMAT_VERSION = 1


def _softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    exp = np.exp(shifted)
    return exp / exp.sum(axis=-1, keepdims=True)


def _softplus(z: np.ndarray) -> np.ndarray:
    return np.logaddexp(0.0, z)


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _freeze(arr: np.ndarray) -> np.ndarray:
    arr = np.array(arr, dtype=np.float64)
    arr.flags.writeable = False
    return arr


class DifferentiableModel:
    """Abstract classifier exposing confidence scores and their input gradients."""

    num_classes: int
    input_shape: tuple[int, int, int]
    #: True when predict() returns a softmax probability vector; False for raw scores.
    probabilistic: bool = True

    def _coerce_batch(self, xs) -> np.ndarray:
        if isinstance(xs, Image):
            arr = xs.data[np.newaxis]
        elif isinstance(xs, (list, tuple)):
            arr = np.stack([as_array(x) for x in xs])
        else:
            arr = np.asarray(xs, dtype=np.float64)
            if arr.ndim == len(self.input_shape):
                arr = arr[np.newaxis]
        if arr.ndim != 4 or arr.shape[1:] != self.input_shape:
            raise InvalidArgumentError(
                f"input shape {arr.shape[1:]} does not match model shape {self.input_shape}"
            )
        return arr

    def check_class(self, c: int) -> int:
        c = int(c)
        if not 0 <= c < self.num_classes:
            raise InvalidArgumentError(
                f"class index {c} out of range [0, {self.num_classes})"
            )
        return c

    def predict_many(self, xs) -> np.ndarray:
        """Confidence scores for a stack of inputs, shape (B, num_classes)."""
        return self._predict_batch(self._coerce_batch(xs))

    def gradient_many(self, xs, c: int) -> np.ndarray:
        """d f_c / d x for a stack of inputs, shape (B,) + input_shape."""
        return self._gradient_batch(self._coerce_batch(xs), self.check_class(c))

    def predict(self, x) -> np.ndarray:
        batch = self._coerce_batch(x)
        if batch.shape[0] != 1:
            raise InvalidArgumentError("predict() takes a single input; use predict_many()")
        return self._predict_batch(batch)[0]

    def gradient(self, x, c: int) -> np.ndarray:
        batch = self._coerce_batch(x)
        if batch.shape[0] != 1:
            raise InvalidArgumentError("gradient() takes a single input; use gradient_many()")
        return self._gradient_batch(batch, self.check_class(c))[0]

    def _predict_batch(self, xs: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def _gradient_batch(self, xs: np.ndarray, c: int) -> np.ndarray:
        raise NotImplementedError


class LinearSoftmaxModel(DifferentiableModel):
    """Linear logits, with softmax (probabilistic) or raw (score) output."""

    def __init__(self, weights, biases, input_shape, apply_softmax: bool = True):
        weights = np.asarray(weights, dtype=np.float64)
        biases = np.asarray(biases, dtype=np.float64)
        input_shape = tuple(int(d) for d in input_shape)
        dim = int(np.prod(input_shape))
        if weights.ndim != 2 or weights.shape[1] != dim:
            raise InvalidArgumentError(
                f"weights must be (num_classes, {dim}), got {weights.shape}"
            )
        if biases.shape != (weights.shape[0],):
            raise InvalidArgumentError(f"biases must be ({weights.shape[0]},), got {biases.shape}")
        if not (np.all(np.isfinite(weights)) and np.all(np.isfinite(biases))):
            raise InvalidArgumentError("weights and biases must be finite")
        self.weights = _freeze(weights)
        self.biases = _freeze(biases)
        self.input_shape = input_shape
        self.num_classes = weights.shape[0]
        self.apply_softmax = bool(apply_softmax)
        self.probabilistic = self.apply_softmax

    def _logits(self, xs: np.ndarray) -> np.ndarray:
        flat = xs.reshape(xs.shape[0], -1)
        return flat @ self.weights.T + self.biases

    def _predict_batch(self, xs: np.ndarray) -> np.ndarray:
        logits = self._logits(xs)
        return _softmax(logits) if self.apply_softmax else logits

    def _gradient_batch(self, xs: np.ndarray, c: int) -> np.ndarray:
        b = xs.shape[0]
        if not self.apply_softmax:
            grad_flat = np.broadcast_to(self.weights[c], (b, self.weights.shape[1]))
            return grad_flat.reshape((b,) + self.input_shape).copy()
        probs = _softmax(self._logits(xs))
        # d p_c / d x = p_c (w_c - sum_k p_k w_k)
        mixed = probs @ self.weights
        grad_flat = probs[:, c : c + 1] * (self.weights[c] - mixed)
        return grad_flat.reshape((b,) + self.input_shape)


class QuadraticScoreModel(DifferentiableModel):
    """Per-class score 0.5 x^T A_c x with symmetric A_c; raw scores, no softmax."""

    probabilistic = False

    def __init__(self, matrices, input_shape):
        matrices = np.asarray(matrices, dtype=np.float64)
        input_shape = tuple(int(d) for d in input_shape)
        dim = int(np.prod(input_shape))
        if matrices.ndim != 3 or matrices.shape[1:] != (dim, dim):
            raise InvalidArgumentError(
                f"matrices must be (num_classes, {dim}, {dim}), got {matrices.shape}"
            )
        if not np.all(np.isfinite(matrices)):
            raise InvalidArgumentError("matrices must be finite")
        if not np.array_equal(matrices, matrices.transpose(0, 2, 1)):
            raise InvalidArgumentError("each class matrix must be symmetric")
        self.matrices = _freeze(matrices)
        self.input_shape = input_shape
        self.num_classes = matrices.shape[0]

    def _predict_batch(self, xs: np.ndarray) -> np.ndarray:
        flat = xs.reshape(xs.shape[0], -1)
        return 0.5 * np.einsum("bd,kde,be->bk", flat, self.matrices, flat)

    def _gradient_batch(self, xs: np.ndarray, c: int) -> np.ndarray:
        flat = xs.reshape(xs.shape[0], -1)
        grad_flat = flat @ self.matrices[c]  # A_c symmetric, so A_c x
        return grad_flat.reshape(xs.shape)


def _pad_symmetric(xs: np.ndarray) -> np.ndarray:
    return np.pad(xs, ((0, 0), (1, 1), (1, 1), (0, 0)), mode="symmetric")


def _unpad_adjoint(dpadded: np.ndarray) -> np.ndarray:
    # Adjoint of 1-pixel symmetric padding: mirrored border gradients fold back
    # onto their source pixels.
    b, hp, wp, c = dpadded.shape
    h, w = hp - 2, wp - 2
    row_map = np.concatenate(([0], np.arange(h), [h - 1]))
    col_map = np.concatenate(([0], np.arange(w), [w - 1]))
    rows = np.zeros((b, h, wp, c), dtype=dpadded.dtype)
    np.add.at(rows, (slice(None), row_map), dpadded)
    out = np.zeros((b, h, w, c), dtype=dpadded.dtype)
    np.add.at(out, (slice(None), slice(None), col_map), rows)
    return out


class TinyConvNet(DifferentiableModel):
    """3x3 conv (8 filters, reflection pad) -> softplus -> 2x2 avg pool -> dense -> softmax."""

    def __init__(self, kernel, conv_bias, dense_w, dense_b, input_shape):
        input_shape = tuple(int(d) for d in input_shape)
        h, w, cin = input_shape
        kernel = np.asarray(kernel, dtype=np.float64)
        conv_bias = np.asarray(conv_bias, dtype=np.float64)
        dense_w = np.asarray(dense_w, dtype=np.float64)
        dense_b = np.asarray(dense_b, dtype=np.float64)
        if kernel.ndim != 4 or kernel.shape[:3] != (3, 3, cin):
            raise InvalidArgumentError(f"kernel must be (3, 3, {cin}, filters), got {kernel.shape}")
        filters = kernel.shape[3]
        if conv_bias.shape != (filters,):
            raise InvalidArgumentError(f"conv bias must be ({filters},), got {conv_bias.shape}")
        pooled_dim = filters * (h // 2) * (w // 2)
        if dense_w.ndim != 2 or dense_w.shape[0] != pooled_dim:
            raise InvalidArgumentError(
                f"dense weights must be ({pooled_dim}, num_classes), got {dense_w.shape}"
            )
        if dense_b.shape != (dense_w.shape[1],):
            raise InvalidArgumentError(f"dense bias must be ({dense_w.shape[1]},), got {dense_b.shape}")
        for arr in (kernel, conv_bias, dense_w, dense_b):
            if not np.all(np.isfinite(arr)):
                raise InvalidArgumentError("all weights must be finite")
        self.kernel = _freeze(kernel)
        self.conv_bias = _freeze(conv_bias)
        self.dense_w = _freeze(dense_w)
        self.dense_b = _freeze(dense_b)
        self.input_shape = input_shape
        self.filters = filters
        self.num_classes = dense_w.shape[1]

    @classmethod
    def initialized(cls, input_shape, num_classes: int = 3, filters: int = 8, seed: int = 0,
                    rng: np.random.Generator | None = None) -> "TinyConvNet":
        """Fresh weights: uniform(-a, a) with a = sqrt(6 / (fan_in + fan_out)), zero biases."""
        if rng is None:
            rng = np.random.default_rng(seed)
        h, w, cin = input_shape
        a_conv = np.sqrt(6.0 / (9 * cin + 9 * filters))
        kernel = rng.uniform(-a_conv, a_conv, size=(3, 3, cin, filters))
        pooled_dim = filters * (h // 2) * (w // 2)
        a_dense = np.sqrt(6.0 / (pooled_dim + num_classes))
        dense_w = rng.uniform(-a_dense, a_dense, size=(pooled_dim, num_classes))
        return cls(kernel, np.zeros(filters), dense_w, np.zeros(num_classes), input_shape)

    def replace_weights(self, kernel, conv_bias, dense_w, dense_b) -> "TinyConvNet":
        return TinyConvNet(kernel, conv_bias, dense_w, dense_b, self.input_shape)

    def _forward(self, xs: np.ndarray) -> dict:
        b = xs.shape[0]
        h, w, _ = self.input_shape
        padded = _pad_symmetric(xs)
        conv = np.zeros((b, h, w, self.filters))
        for dy in range(3):
            for dx in range(3):
                conv += padded[:, dy : dy + h, dx : dx + w, :] @ self.kernel[dy, dx]
        conv += self.conv_bias
        act = _softplus(conv)
        h2, w2 = h // 2, w // 2
        cropped = act[:, : 2 * h2, : 2 * w2, :]
        pooled = cropped.reshape(b, h2, 2, w2, 2, self.filters).mean(axis=(2, 4))
        flat = pooled.reshape(b, -1)
        logits = flat @ self.dense_w + self.dense_b
        probs = _softmax(logits)
        return {"padded": padded, "conv": conv, "flat": flat, "probs": probs}

    def _predict_batch(self, xs: np.ndarray) -> np.ndarray:
        return self._forward(xs)["probs"]

    def _backward_to_input(self, cache: dict, dlogits: np.ndarray) -> np.ndarray:
        b = dlogits.shape[0]
        h, w, _ = self.input_shape
        h2, w2 = h // 2, w // 2
        dflat = dlogits @ self.dense_w.T
        dpooled = dflat.reshape(b, h2, w2, self.filters)
        dact = np.zeros((b, h, w, self.filters))
        upsampled = np.repeat(np.repeat(dpooled, 2, axis=1), 2, axis=2) / 4.0
        dact[:, : 2 * h2, : 2 * w2, :] = upsampled
        dconv = dact * _sigmoid(cache["conv"])
        dpadded = np.zeros_like(cache["padded"])
        for dy in range(3):
            for dx in range(3):
                dpadded[:, dy : dy + h, dx : dx + w, :] += dconv @ self.kernel[dy, dx].T
        return _unpad_adjoint(dpadded)

    def _gradient_batch(self, xs: np.ndarray, c: int) -> np.ndarray:
        cache = self._forward(xs)
        probs = cache["probs"]
        # d p_c / d logit_k = p_c (delta_kc - p_k)
        dlogits = -probs[:, c : c + 1] * probs
        dlogits[:, c] += probs[:, c]
        return self._backward_to_input(cache, dlogits)

    def _parameter_gradients(self, xs: np.ndarray, labels: np.ndarray) -> dict:
        """Mean cross-entropy gradients for one minibatch."""
        b = xs.shape[0]
        h, w, _ = self.input_shape
        h2, w2 = h // 2, w // 2
        cache = self._forward(xs)
        dlogits = cache["probs"].copy()
        dlogits[np.arange(b), labels] -= 1.0
        dlogits /= b
        d_dense_w = cache["flat"].T @ dlogits
        d_dense_b = dlogits.sum(axis=0)
        dflat = dlogits @ self.dense_w.T
        dpooled = dflat.reshape(b, h2, w2, self.filters)
        dact = np.zeros((b, h, w, self.filters))
        dact[:, : 2 * h2, : 2 * w2, :] = np.repeat(np.repeat(dpooled, 2, axis=1), 2, axis=2) / 4.0
        dconv = dact * _sigmoid(cache["conv"])
        d_kernel = np.zeros_like(self.kernel)
        padded = cache["padded"]
        for dy in range(3):
            for dx in range(3):
                d_kernel[dy, dx] = np.einsum(
                    "bhwc,bhwf->cf", padded[:, dy : dy + h, dx : dx + w, :], dconv
                )
        d_conv_bias = dconv.sum(axis=(0, 1, 2))
        loss = -np.mean(np.log(cache["probs"][np.arange(b), labels] + 1e-300))
        return {
            "kernel": d_kernel,
            "conv_bias": d_conv_bias,
            "dense_w": d_dense_w,
            "dense_b": d_dense_b,
            "loss": loss,
        }


def predict(model: DifferentiableModel, x) -> np.ndarray:
    return model.predict(x)


def gradient(model: DifferentiableModel, x, c: int) -> np.ndarray:
    return model.gradient(x, c)


def finite_diff_gradient(model: DifferentiableModel, x, c: int, h: float = 1e-5) -> np.ndarray:
    """Central-difference gradient oracle: (f(x + h e_i) - f(x - h e_i)) / 2h."""
    if not h > 0:
        raise InvalidArgumentError(f"step h must be positive, got {h}")
    c = model.check_class(c)
    base = as_array(x).copy()
    grad = np.zeros_like(base)
    flat = base.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        up = model.predict_many(base[np.newaxis])[0, c]
        flat[i] = orig - h
        down = model.predict_many(base[np.newaxis])[0, c]
        flat[i] = orig
        gflat[i] = (up - down) / (2.0 * h)
    return grad


def accuracy(model: DifferentiableModel, images, labels) -> float:
    probs = model.predict_many(images)
    return float(np.mean(probs.argmax(axis=1) == np.asarray(labels)))


def train_toy(dataset, epochs: int, learning_rate: float = 0.5, seed: int = 0,
              batch_size: int = 32, filters: int = 8) -> TinyConvNet:
    """Minibatch SGD on a ToyDataset; deterministic for a fixed seed.

    Weight init and the per-epoch shuffling schedule both derive from `seed`,
    so the same call twice yields bit-identical weights.
    """
    if len(dataset.images) == 0:
        raise InvalidArgumentError("cannot train on an empty dataset")
    rng = np.random.default_rng(seed)
    shape = dataset.images[0].shape
    model = TinyConvNet.initialized(shape, num_classes=dataset.num_classes,
                                    filters=filters, rng=rng)
    xs = np.stack([img.data for img in dataset.images])
    labels = np.asarray(dataset.labels, dtype=np.int64)
    n = xs.shape[0]
    params = {
        "kernel": model.kernel.copy(),
        "conv_bias": model.conv_bias.copy(),
        "dense_w": model.dense_w.copy(),
        "dense_b": model.dense_b.copy(),
    }
    for _ in range(epochs):
        order = rng.permutation(n)
        for start in range(0, n, batch_size):
            idx = order[start : start + batch_size]
            grads = model._parameter_gradients(xs[idx], labels[idx])
            for name in params:
                params[name] -= learning_rate * grads[name]
            model = model.replace_weights(**params)
    return model


# --- model file format: magic "ATBM", version, arch tag, shape header,
#     f64 weight blobs, trailing CRC32 ---

_ARCH_LINEAR = "linear"
_ARCH_QUADRATIC = "quadratic-score"
_ARCH_CONVNET = "tiny-convnet"


def save_model(model: DifferentiableModel, path) -> None:
    w = Writer()
    w.raw(MODEL_MAGIC)
    w.u32(MODEL_FORMAT_VERSION)
    if isinstance(model, LinearSoftmaxModel):
        w.string(_ARCH_LINEAR)
    elif isinstance(model, QuadraticScoreModel):
        w.string(_ARCH_QUADRATIC)
    elif isinstance(model, TinyConvNet):
        w.string(_ARCH_CONVNET)
    else:
        raise InvalidArgumentError(f"cannot serialize model type {type(model).__name__}")
    w.u32(model.num_classes)
    for dim in model.input_shape:
        w.u32(dim)
    if isinstance(model, LinearSoftmaxModel):
        w.u32(1 if model.apply_softmax else 0)
        w.u32(2)
        w.f64_array(model.weights)
        w.f64_array(model.biases)
    elif isinstance(model, QuadraticScoreModel):
        w.u32(0)
        w.u32(1)
        w.f64_array(model.matrices)
    else:
        w.u32(0)
        w.u32(4)
        w.f64_array(model.kernel)
        w.f64_array(model.conv_bias)
        w.f64_array(model.dense_w)
        w.f64_array(model.dense_b)
    write_file(path, w.payload())


def _read_arrays(r: Reader, expected: int) -> list[np.ndarray]:
    at = r.pos
    count = r.u32()
    if count != expected:
        raise ParseError(f"expected {expected} weight arrays, found {count}", offset=at)
    return [r.f64_array() for _ in range(count)]


def load_model(path) -> DifferentiableModel:
    r = read_file(path, MODEL_MAGIC)
    at = r.pos
    version = r.u32()
    if version != MODEL_FORMAT_VERSION:
        raise UnsupportedVersionError(
            f"model format version {version} is not supported (expected {MODEL_FORMAT_VERSION})",
            offset=at,
        )
    arch = r.string()
    num_classes = r.u32()
    shape = tuple(r.u32() for _ in range(3))
    flag = r.u32()
    if arch == _ARCH_LINEAR:
        weights, biases = _read_arrays(r, 2)
        model: DifferentiableModel = LinearSoftmaxModel(
            weights, biases, shape, apply_softmax=bool(flag)
        )
    elif arch == _ARCH_QUADRATIC:
        (matrices,) = _read_arrays(r, 1)
        model = QuadraticScoreModel(matrices, shape)
    elif arch == _ARCH_CONVNET:
        kernel, conv_bias, dense_w, dense_b = _read_arrays(r, 4)
        model = TinyConvNet(kernel, conv_bias, dense_w, dense_b, shape)
    else:
        raise ParseError(f"unknown architecture tag {arch!r}", offset=at)
    r.expect_done()
    if model.num_classes != num_classes:
        raise ParseError(
            f"header says {num_classes} classes but weights imply {model.num_classes}",
            offset=at,
        )
    return model
