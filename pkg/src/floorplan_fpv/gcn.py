"""Joint GCN + linear rent model.

Architecture: GCNConv (edge-weighted, room one-hot -> hidden) -> ReLU ->
``num_layers`` residual gated graph convolutions -> global pooling -> scalar
floor plan value (FPV); the rent head is linear over ``[fpv, tabular, 1]``.
"""

from __future__ import annotations

import base64
import json
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .dataset import FEATURE_COLUMNS, Dataset, Scaler, encode_matrix
from .graph import LABELS, AccessGraph

logger = logging.getLogger(__name__)

CHECKPOINT_FORMAT = "floorplan-fpv-checkpoint"
CHECKPOINT_VERSION = 1


class TrainingDiverged(RuntimeError):
    code = "TrainingDiverged"


# ---------------------------------------------------------------------------
# batching
# ---------------------------------------------------------------------------


@dataclass
class GraphBatch:
    """Block-diagonal union of graphs with per-node segment ids."""

    x: np.ndarray  # (N, 10) node features
    src: np.ndarray  # (E,) directed edge sources
    dst: np.ndarray  # (E,) directed edge targets
    edge_weight: np.ndarray  # (E,)
    segment: np.ndarray  # (N,) graph position of every node
    n_graphs: int
    edge_segment: np.ndarray  # (E,) graph position of every directed edge

    @property
    def n_nodes(self) -> int:
        return len(self.x)

    @classmethod
    def from_graphs(cls, graphs: Sequence[AccessGraph]) -> "GraphBatch":
        xs, srcs, dsts, segs, esegs = [], [], [], [], []
        offset = 0
        for k, g in enumerate(graphs):
            if g.n_nodes == 0:
                raise ValueError(f"{g.id}: cannot batch an empty graph")
            xs.append(g.one_hot())
            e = g.directed_edges()
            srcs.append(e[:, 0] + offset)
            dsts.append(e[:, 1] + offset)
            segs.append(np.full(g.n_nodes, k, dtype=np.int64))
            esegs.append(np.full(len(e), k, dtype=np.int64))
            offset += g.n_nodes
        src = np.concatenate(srcs) if srcs else np.zeros(0, dtype=np.int64)
        return cls(
            x=np.concatenate(xs) if xs else np.zeros((0, len(LABELS))),
            src=src.astype(np.int64),
            dst=(np.concatenate(dsts) if dsts else np.zeros(0)).astype(np.int64),
            edge_weight=np.ones(len(src)),
            segment=(np.concatenate(segs) if segs else np.zeros(0)).astype(np.int64),
            n_graphs=len(graphs),
            edge_segment=(np.concatenate(esegs) if esegs else np.zeros(0)).astype(np.int64),
        )

    @classmethod
    def single(cls, x: np.ndarray, edges: np.ndarray, edge_weight: np.ndarray | None = None) -> "GraphBatch":
        """One graph from raw arrays; ``edges`` is a (E, 2) directed list."""
        edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
        n = len(x)
        return cls(
            x=np.asarray(x, dtype=np.float64),
            src=edges[:, 0].copy(),
            dst=edges[:, 1].copy(),
            edge_weight=np.ones(len(edges)) if edge_weight is None else np.asarray(edge_weight, dtype=np.float64),
            segment=np.zeros(n, dtype=np.int64),
            n_graphs=1,
            edge_segment=np.zeros(len(edges), dtype=np.int64),
        )

    def repeated(self, times: int) -> "GraphBatch":
        """``times`` stacked copies of a single-graph batch (one segment each)."""
        if self.n_graphs != 1:
            raise ValueError("repeated() expects a single-graph batch")
        n, e = self.n_nodes, len(self.src)
        offs = np.repeat(np.arange(times, dtype=np.int64) * n, e)
        return GraphBatch(
            x=np.tile(self.x, (times, 1)),
            src=np.tile(self.src, times) + offs,
            dst=np.tile(self.dst, times) + offs,
            edge_weight=np.tile(self.edge_weight, times),
            segment=np.repeat(np.arange(times, dtype=np.int64), n),
            n_graphs=times,
            edge_segment=np.repeat(np.arange(times, dtype=np.int64), e),
        )


# ---------------------------------------------------------------------------
# layers
# ---------------------------------------------------------------------------


def glorot(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    limit = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


def gcn_conv(x: Tensor, src: np.ndarray, dst: np.ndarray, weight: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """Symmetric-normalised convolution ``D^-1/2 (A_w + I) D^-1/2 X W + b``.

    The self-loop weight is fixed at 1, so a zero edge weight is exactly the
    same as a missing edge.
    """
    n = x.shape[0]
    deg = ad.add(ad.scatter_add(weight, dst, n), 1.0)
    dinv = ad.power(deg, -0.5)
    norm = ad.mul(ad.mul(ad.gather(dinv, src), weight), ad.gather(dinv, dst))
    h = ad.matmul(x, w)
    self_term = ad.mul(h, ad.reshape(ad.mul(dinv, dinv), (-1, 1)))
    return ad.add(ad.add(ad.weighted_aggregate(h, norm, src, dst, n), self_term), b)


def res_gated_conv(h: Tensor, src: np.ndarray, dst: np.ndarray, p: dict[str, Tensor]) -> Tensor:
    """Gated message passing with an additive residual and ReLU.

    ``h_i' = relu(W1 h_i + b1 + sum_j sigmoid(W3 h_i + W4 h_j + b3 + b4) * (W2 h_j + b2) + h_i)``
    """
    n = h.shape[0]
    skip = ad.add(ad.matmul(h, p["w1"]), p["b1"])
    # value / key / query projections in one product
    w = ad.concat([p["w2"], p["w3"], p["w4"]], axis=1)
    b = ad.concat([p["b2"], p["b3"], p["b4"]], axis=0)
    proj = ad.add(ad.matmul(h, w), b)
    return ad.relu(ad.add(ad.add(skip, ad.gated_aggregate(proj, src, dst, n)), h))


def readout(h: Tensor, segment: np.ndarray, n_graphs: int, pooling: str = "mean") -> Tensor:
    if h.shape[0] == 0:
        raise ValueError("readout of an empty graph")
    pooled = ad.scatter_add(h, segment, n_graphs)
    if pooling == "sum":
        return pooled
    if pooling != "mean":
        raise ValueError(f"unknown pooling {pooling!r}")
    counts = np.bincount(segment, minlength=n_graphs).astype(np.float64)
    return ad.mul(pooled, (1.0 / counts)[:, None])


# ---------------------------------------------------------------------------
# model
# ---------------------------------------------------------------------------


@dataclass
class TrainConfig:
    lr: float = 0.01
    batch_size: int = 1024
    epochs: int = 2000
    checkpoint_interval: int = 50
    hidden_dim: int = 64
    num_layers: int = 3
    pooling: str = "mean"
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown TrainConfig keys: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def load(cls, path: str | Path) -> "TrainConfig":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


class GcnModel:
    """Parameters of the joint model plus the fixed input/target scaling."""

    def __init__(
        self,
        hidden_dim: int = 64,
        num_layers: int = 3,
        n_tabular: int = len(FEATURE_COLUMNS),
        pooling: str = "mean",
        seed: int = 0,
    ):
        self.hidden_dim = hidden_dim
        self.num_layers = num_layers
        self.n_tabular = n_tabular
        self.pooling = pooling
        self.scaler: Scaler | None = None
        self.target_shift = 0.0
        self.target_scale = 1.0
        rng = np.random.default_rng(seed)
        d, f = hidden_dim, len(LABELS)
        params = {"gcn.w": glorot(rng, f, d), "gcn.b": np.zeros(d)}
        for k in range(num_layers):
            for m in (1, 2, 3, 4):
                params[f"res{k}.w{m}"] = glorot(rng, d, d)
                params[f"res{k}.b{m}"] = np.zeros(d)
        params["fpv.w"] = glorot(rng, d, 1)
        params["fpv.b"] = np.zeros(1)
        params["reg.w_fpv"] = glorot(rng, 1, 1).reshape(1)
        params["reg.w_tab"] = glorot(rng, n_tabular, 1)
        params["reg.b"] = np.zeros(1)
        self.params: dict[str, np.ndarray] = params

    def architecture(self) -> dict:
        return {
            "hidden_dim": self.hidden_dim,
            "num_layers": self.num_layers,
            "n_tabular": self.n_tabular,
            "pooling": self.pooling,
            "node_features": list(LABELS),
            "tabular_columns": list(FEATURE_COLUMNS),
        }

    # --- forward passes -------------------------------------------------

    def tensors(self, requires_grad: bool = False) -> dict[str, Tensor]:
        return {k: Tensor(v, requires_grad=requires_grad) for k, v in self.params.items()}

    def gcn_embed(self, batch: GraphBatch, t: dict[str, Tensor], x: Tensor | None = None, weight: Tensor | None = None) -> Tensor:
        x = Tensor(batch.x) if x is None else x
        weight = Tensor(batch.edge_weight) if weight is None else weight
        h = ad.relu(gcn_conv(x, batch.src, batch.dst, weight, t["gcn.w"], t["gcn.b"]))
        for k in range(self.num_layers):
            layer = {f"{n}": t[f"res{k}.{n}"] for n in ("w1", "w2", "w3", "w4", "b1", "b2", "b3", "b4")}
            h = res_gated_conv(h, batch.src, batch.dst, layer)
        return h

    def fpv_tensor(self, batch: GraphBatch, t: dict[str, Tensor], x: Tensor | None = None, weight: Tensor | None = None) -> Tensor:
        h = self.gcn_embed(batch, t, x, weight)
        g = readout(h, batch.segment, batch.n_graphs, self.pooling)
        return ad.reshape(ad.add(ad.matmul(g, t["fpv.w"]), t["fpv.b"]), (-1,))

    def rent_tensor(self, fpv: Tensor, tab: np.ndarray, t: dict[str, Tensor]) -> Tensor:
        """Rent in currency from per-record FPV and already-scaled tabular rows."""
        lin = ad.add(
            ad.add(ad.mul(fpv, t["reg.w_fpv"]), ad.reshape(ad.matmul(Tensor(tab), t["reg.w_tab"]), (-1,))),
            t["reg.b"],
        )
        return ad.add(ad.mul(lin, self.target_scale), self.target_shift)

    def fpv(self, batch: GraphBatch) -> np.ndarray:
        return self.fpv_tensor(batch, self.tensors()).data.copy()

    def scale_tabular(self, tab: np.ndarray) -> np.ndarray:
        return self.scaler.transform(tab) if self.scaler is not None else np.asarray(tab, dtype=np.float64)

    def joint_forward(self, graphs: Sequence[AccessGraph], tab: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """(rent prediction, raw FPV) for aligned graphs and raw tabular rows."""
        tab = np.atleast_2d(np.asarray(tab, dtype=np.float64))
        t = self.tensors()
        f = self.fpv_tensor(GraphBatch.from_graphs(graphs), t)
        rent = self.rent_tensor(f, self.scale_tabular(tab), t)
        return rent.data.copy(), f.data.copy()

    def copy(self) -> "GcnModel":
        m = GcnModel.__new__(GcnModel)
        m.__dict__.update(self.__dict__)
        m.params = {k: v.copy() for k, v in self.params.items()}
        return m

    # --- persistence ----------------------------------------------------

    def state(self) -> dict:
        return {
            "architecture": self.architecture(),
            "scaler": None if self.scaler is None else self.scaler.to_dict(),
            "target_shift": self.target_shift,
            "target_scale": self.target_scale,
            "params": {k: _encode_array(v) for k, v in self.params.items()},
        }

    @classmethod
    def from_state(cls, state: dict) -> "GcnModel":
        arch = state["architecture"]
        if arch["node_features"] != list(LABELS):
            raise ValueError("checkpoint node feature layout does not match this build")
        m = cls.__new__(cls)
        m.hidden_dim = arch["hidden_dim"]
        m.num_layers = arch["num_layers"]
        m.n_tabular = arch["n_tabular"]
        m.pooling = arch["pooling"]
        m.scaler = None if state["scaler"] is None else Scaler.from_dict(state["scaler"])
        m.target_shift = state["target_shift"]
        m.target_scale = state["target_scale"]
        m.params = {k: _decode_array(v) for k, v in state["params"].items()}
        return m


def _encode_array(a: np.ndarray) -> dict:
    a = np.ascontiguousarray(a, dtype="<f8")
    return {"shape": list(a.shape), "dtype": "<f8", "data": base64.b64encode(a.tobytes()).decode("ascii")}


def _decode_array(d: dict) -> np.ndarray:
    raw = base64.b64decode(d["data"])
    return np.frombuffer(raw, dtype=d["dtype"]).reshape(d["shape"]).astype(np.float64)


# ---------------------------------------------------------------------------
# optimiser
# ---------------------------------------------------------------------------


ORIENTED_PARAMS = ("fpv.w", "fpv.b", "reg.w_fpv")


def orient(model: "GcnModel", opt: "Adam | None" = None) -> bool:
    """Flip the FPV sign in place so that a higher FPV means a higher rent.

    The FPV head and its rent weight change sign together, so predictions are
    unchanged; Adam's first moments are negated too so training continues on
    the same trajectory. Returns whether a flip happened.
    """
    if model.params["reg.w_fpv"][0] >= 0:
        return False
    for k in ORIENTED_PARAMS:
        model.params[k] = -model.params[k]
        if opt is not None:
            opt.m[k] = -opt.m[k]
    return True


class Adam:
    def __init__(self, params: dict[str, np.ndarray], lr=0.01, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.step_count = 0
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> None:
        self.step_count += 1
        c1 = 1.0 - self.beta1**self.step_count
        c2 = 1.0 - self.beta2**self.step_count
        for k, g in grads.items():
            m = self.m[k]
            v = self.v[k]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            params[k] -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)

    def state(self) -> dict:
        return {
            "step": self.step_count,
            "m": {k: _encode_array(v) for k, v in self.m.items()},
            "v": {k: _encode_array(v) for k, v in self.v.items()},
        }

    def load_state(self, state: dict) -> None:
        self.step_count = state["step"]
        self.m = {k: _decode_array(v) for k, v in state["m"].items()}
        self.v = {k: _decode_array(v) for k, v in state["v"].items()}


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------


@dataclass
class Checkpoint:
    epoch: int
    model: GcnModel
    optimizer: dict
    rng_state: dict
    config: TrainConfig
    history: list[float] = field(default_factory=list)  # per-epoch training RMSE so far

    def to_json(self) -> str:
        payload = {
            "format": CHECKPOINT_FORMAT,
            "version": CHECKPOINT_VERSION,
            "epoch": self.epoch,
            "config": asdict(self.config),
            "model": self.model.state(),
            "optimizer": self.optimizer,
            "rng": self.rng_state,
            "history": self.history,
        }
        return json.dumps(payload, sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_json(cls, text: str) -> "Checkpoint":
        d = json.loads(text)
        if d.get("format") != CHECKPOINT_FORMAT:
            raise ValueError("not a floor-plan checkpoint")
        if d.get("version") != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {d.get('version')}")
        return cls(
            epoch=d["epoch"],
            model=GcnModel.from_state(d["model"]),
            optimizer=d["optimizer"],
            rng_state=d["rng"],
            config=TrainConfig.from_dict(d["config"]),
            history=list(d["history"]),
        )

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_json(), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "Checkpoint":
        return cls.from_json(Path(path).read_text(encoding="utf-8"))


# ---------------------------------------------------------------------------
# training
# ---------------------------------------------------------------------------


@dataclass
class TrainingData:
    """Records mapped onto unique graph classes (isomorphic graphs share an FPV)."""

    batch: GraphBatch
    record_graph: np.ndarray  # (n_records,) graph position per record
    tabular: np.ndarray  # scaled (n_records, n_tabular)
    rent: np.ndarray

    @classmethod
    def build(cls, ds: Dataset, scaler: Scaler | None) -> "TrainingData":
        from .canon import canonical_key

        pos: dict[bytes, int] = {}
        reps: list[AccessGraph] = []
        record_graph = np.empty(len(ds), dtype=np.int64)
        for i, g in enumerate(ds.graphs):
            k = canonical_key(g).key
            if k not in pos:
                pos[k] = len(reps)
                reps.append(g)
            record_graph[i] = pos[k]
        tab = encode_matrix(ds.records, scaler)
        return cls(GraphBatch.from_graphs(reps), record_graph, tab, ds.rent)


def _loss_and_grads(model: GcnModel, data: TrainingData, rows: np.ndarray) -> tuple[float, dict[str, np.ndarray]]:
    t = model.tensors(requires_grad=True)
    fpv_all = model.fpv_tensor(data.batch, t)
    fpv = ad.gather(fpv_all, data.record_graph[rows])
    pred = model.rent_tensor(fpv, data.tabular[rows], t)
    loss = ad.mean_squared_error(pred, data.rent[rows])
    loss.backward()
    grads = {k: (v.grad if v.grad is not None else np.zeros_like(v.data)) for k, v in t.items()}
    return float(loss.data), grads


def init_model(ds: Dataset, cfg: TrainConfig) -> GcnModel:
    model = GcnModel(cfg.hidden_dim, cfg.num_layers, len(FEATURE_COLUMNS), cfg.pooling, cfg.seed)
    model.scaler = Scaler.fit(ds.records)
    rent = ds.rent
    model.target_shift = float(rent.mean())
    sd = float(rent.std())
    model.target_scale = sd if sd > 0 else 1.0
    return model


def train(
    ds: Dataset,
    cfg: TrainConfig,
    resume: Checkpoint | None = None,
    checkpoint_dir: str | Path | None = None,
    on_checkpoint=None,
) -> list[Checkpoint]:
    """Adam on MSE of rent (currency units); a checkpoint every ``checkpoint_interval`` epochs."""
    if len(ds) == 0:
        raise ValueError("cannot train on an empty dataset")
    if resume is None:
        model = init_model(ds, cfg)
        opt = Adam(model.params, cfg.lr, cfg.beta1, cfg.beta2, cfg.eps)
        rng = np.random.default_rng(cfg.seed)
        start, history = 0, []
    else:
        model = resume.model.copy()
        opt = Adam(model.params, cfg.lr, cfg.beta1, cfg.beta2, cfg.eps)
        opt.load_state(resume.optimizer)
        rng = np.random.default_rng()
        rng.bit_generator.state = resume.rng_state
        start, history = resume.epoch, list(resume.history)

    data = TrainingData.build(ds, model.scaler)
    n = len(ds)
    out: list[Checkpoint] = []
    if checkpoint_dir is not None:
        Path(checkpoint_dir).mkdir(parents=True, exist_ok=True)
    for epoch in range(start + 1, cfg.epochs + 1):
        perm = rng.permutation(n)
        sse = 0.0
        for lo in range(0, n, cfg.batch_size):
            rows = perm[lo : lo + cfg.batch_size]
            loss, grads = _loss_and_grads(model, data, rows)
            if not math.isfinite(loss):
                raise TrainingDiverged(f"non-finite loss at epoch {epoch}")
            opt.step(model.params, grads)
            sse += loss * len(rows)
        history.append(math.sqrt(sse / n))
        if epoch % cfg.checkpoint_interval == 0:
            orient(model, opt)
            ck = Checkpoint(epoch, model.copy(), opt.state(), _rng_state(rng), cfg, list(history))
            out.append(ck)
            if checkpoint_dir is not None:
                ck.save(Path(checkpoint_dir) / f"epoch_{epoch:05d}.json")
            if on_checkpoint is not None:
                on_checkpoint(ck)
            logger.debug("epoch %d train RMSE %.1f", epoch, history[-1])
    return out


def _rng_state(rng: np.random.Generator) -> dict:
    return json.loads(json.dumps(rng.bit_generator.state))


def training_rmse(model: GcnModel, ds: Dataset) -> float:
    rent, _ = model.joint_forward(ds.graphs, encode_matrix(ds.records))
    return float(np.sqrt(np.mean((rent - ds.rent) ** 2)))


# ---------------------------------------------------------------------------
# scoring
# ---------------------------------------------------------------------------


def fpv_scores(model: GcnModel, graphs: Sequence[AccessGraph]) -> np.ndarray:
    """Raw FPV per graph (input order)."""
    if not graphs:
        return np.zeros(0)
    return model.fpv(GraphBatch.from_graphs(graphs))


def fpv_deviation(raw: Sequence[float]) -> np.ndarray:
    """Rescale scores to mean 50 and (population) standard deviation 10."""
    x = np.asarray(raw, dtype=np.float64)
    if x.size < 2:
        raise ValueError("need at least two scores")
    sd = x.std()
    if not sd > 0:
        raise ValueError("scores have zero spread")
    return 10.0 * (x - x.mean()) / sd + 50.0
