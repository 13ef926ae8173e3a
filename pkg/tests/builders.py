"""Small models and datasets shared by the test suite."""

import gzip
import struct

import numpy as np

from advartifact.domain.network import LayerSpec, LayerWeights, NetworkModel
from advartifact.services import network_service


def linear_model(weight, bias=None) -> NetworkModel:
    """Single dense layer + softmax over a flat input, with given weights."""
    w = np.asarray(weight, dtype=np.float64)
    b = np.zeros(w.shape[0]) if bias is None else np.asarray(bias, dtype=np.float64)
    return NetworkModel(
        layers=(LayerSpec.dense(w.shape[0]), LayerSpec.softmax()),
        input_shape=(w.shape[1],),
        num_classes=w.shape[0],
        weights=(LayerWeights(w, b), None),
    )


def mlp(
    input_dim: int = 2, hidden: int = 8, num_classes: int = 2, dropout: float = 0.0, seed: int = 0
) -> NetworkModel:
    """dense(hidden) -> relu -> [dropout] -> dense(num_classes) -> softmax."""
    layers = [LayerSpec.dense(hidden), LayerSpec.relu()]
    if dropout > 0:
        layers.append(LayerSpec.dropout(dropout))
    layers += [LayerSpec.dense(num_classes), LayerSpec.softmax()]
    return network_service.build_model(layers, (input_dim,), num_classes, seed)


def small_convnet(seed: int = 0, dropout: float = 0.0) -> NetworkModel:
    """conv(2@3x3) -> relu -> pool 2 -> [dropout] -> dense(3) -> softmax on [1, 6, 6]."""
    layers = [LayerSpec.conv2d(2, 3), LayerSpec.relu(), LayerSpec.maxpool2d(2)]
    if dropout > 0:
        layers.append(LayerSpec.dropout(dropout))
    layers += [LayerSpec.dense(3), LayerSpec.softmax()]
    return network_service.build_model(layers, (1, 6, 6), 3, seed)


def blobs(n: int = 100, seed: int = 0, spread: float = 0.3) -> tuple[np.ndarray, np.ndarray]:
    """Two linearly separable 2D Gaussian blobs; returns (points [n, 2], labels [n])."""
    rng = np.random.default_rng(seed)
    labels = np.arange(n) % 2
    centers = np.where(labels[:, None] == 0, -1.5, 1.5)
    return centers + spread * rng.standard_normal((n, 2)), labels


def half_images(n: int, seed: int = 0, side: int = 4) -> tuple[np.ndarray, np.ndarray]:
    """Images [n, 1, side, side]: class 0 has a bright left half, class 1 a bright right half."""
    rng = np.random.default_rng(seed)
    labels = np.arange(n) % 2
    images = rng.uniform(0.0, 0.2, size=(n, 1, side, side))
    half = side // 2
    for index, label in enumerate(labels):
        columns = slice(0, half) if label == 0 else slice(half, side)
        images[index, 0, :, columns] = rng.uniform(0.8, 1.0, size=(side, half))
    return images, labels


def csv_text(images: np.ndarray, labels: np.ndarray) -> str:
    rows = [
        ",".join([str(int(label))] + [repr(float(v)) for v in image.ravel()])
        for image, label in zip(images, labels, strict=True)
    ]
    return "\n".join(rows) + "\n"


def idx_images(pixels: np.ndarray, magic: int = 0x00000803) -> bytes:
    """IDX3 bytes for uint8 images [n, rows, cols]."""
    n, rows, cols = pixels.shape
    return struct.pack(">IIII", magic, n, rows, cols) + pixels.astype(np.uint8).tobytes()


def idx_labels(labels: np.ndarray, magic: int = 0x00000801) -> bytes:
    return struct.pack(">II", magic, len(labels)) + np.asarray(labels, dtype=np.uint8).tobytes()


def gzipped(data: bytes) -> bytes:
    return gzip.compress(data, mtime=0)


def toy_experiment_yaml(train_csv: str, test_csv: str, seed: int = 1, validation_size: int = 10) -> str:
    """Experiment document for a 16-pixel two-class CSV dataset, sized to run in seconds."""
    return f"""seed: {seed}
dataset:
  format: csv
  name: toy
  train: {{images: {train_csv}}}
  test: {{images: {test_csv}}}
  num_classes: 2
  validation_size: {validation_size}
model:
  layers:
    - {{kind: dense, out_dim: 16}}
    - {{kind: relu}}
    - {{kind: dropout, rate: 0.5}}
    - {{kind: dense, out_dim: 2}}
    - {{kind: softmax}}
  training: {{epochs: 60, batch_size: 5}}
attacks:
  max_samples: 8
  fgsm: {{epsilon: 0.4}}
  bim-a: {{epsilon_step: 0.05, epsilon_clip: 0.4, iterations: 10}}
  bim-b: {{epsilon_step: 0.05, epsilon_clip: 0.4, iterations: 5}}
  jsma: {{theta: 1.0, max_fraction: 0.5}}
  cw: {{c: 5.0, steps: 20, step_size: 0.05}}
artifacts: {{mc_samples: 10, walks: 2}}
detector:
  train_fraction: 0.5
  logreg: {{iters: 200}}
undecided: {{percentile: 50, epsilon: 0.3}}
"""
