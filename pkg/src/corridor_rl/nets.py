"""Small dense nets in float64 numpy with hand-written backprop.

The policy is a tanh trunk feeding one linear layer whose output reshapes
to (heads, choices); each head is an independent categorical over offset
bins. State values come from a separate net of the same trunk shape.
Plain arrays everywhere keeps updates, serialization, and finite-difference
checks transparent.
"""

from typing import Dict, Iterable, List, Sequence, Tuple

import numpy as np

Array = np.ndarray


def softmax(z: Array, axis: int = -1) -> Array:
    shifted = z - z.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=axis, keepdims=True)


def log_softmax(z: Array, axis: int = -1) -> Array:
    shifted = z - z.max(axis=axis, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=axis, keepdims=True))


def entropy_grad(logp: Array) -> Array:
    """d/dz of H(softmax(z)) given log-probabilities over the last axis."""
    p = np.exp(logp)
    h = -(p * logp).sum(axis=-1, keepdims=True)
    return -p * (logp + h)


def orthogonal(rng: np.random.Generator, n_in: int, n_out: int,
               gain: float = 1.0) -> Array:
    a = rng.standard_normal((max(n_in, n_out), min(n_in, n_out)))
    q, r = np.linalg.qr(a)
    q = q * np.sign(np.diag(r))  # fix the sign ambiguity
    if n_in < n_out:
        q = q.T
    return gain * q[:n_in, :n_out]


class MLP:
    """Feedforward net: tanh hidden layers, linear output."""

    __slots__ = ("sizes", "W", "b")

    def __init__(self, sizes: Sequence[int], rng: np.random.Generator,
                 out_gain: float = 1.0):
        self.sizes = tuple(int(s) for s in sizes)
        self.W: List[Array] = []
        self.b: List[Array] = []
        last = len(self.sizes) - 2
        for i, (n_in, n_out) in enumerate(zip(self.sizes, self.sizes[1:])):
            gain = out_gain if i == last else 1.0
            self.W.append(orthogonal(rng, n_in, n_out, gain))
            self.b.append(np.zeros(n_out))

    def forward(self, x: Array) -> Tuple[Array, List[Array]]:
        """Returns (output (B, n_out), cache of layer inputs)."""
        cache = [x]
        h = x
        for i in range(len(self.W) - 1):
            h = np.tanh(h @ self.W[i] + self.b[i])
            cache.append(h)
        return h @ self.W[-1] + self.b[-1], cache

    def backward(self, cache: List[Array], dout: Array) -> Tuple[List[Array], List[Array]]:
        """Gradients (dW, db) for each layer given d(loss)/d(output)."""
        dW: List[Array] = [np.empty(0)] * len(self.W)
        db: List[Array] = [np.empty(0)] * len(self.b)
        g = dout
        for i in range(len(self.W) - 1, -1, -1):
            dW[i] = cache[i].T @ g
            db[i] = g.sum(axis=0)
            if i > 0:
                g = (g @ self.W[i].T) * (1.0 - cache[i] ** 2)
        return dW, db

    def params(self) -> List[Array]:
        return self.W + self.b


class Adam:
    """Adam with bias correction, stepping a fixed list of arrays in place."""

    def __init__(self, params: Iterable[Array], lr: float = 5e-4,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]

    def step(self, params: List[Array], grads: List[Array]) -> None:
        self.t += 1
        b1t = 1.0 - self.beta1 ** self.t
        b2t = 1.0 - self.beta2 ** self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= self.lr * (m / b1t) / (np.sqrt(v / b2t) + self.eps)


class PolicyValueNet:
    """Independent categorical heads for offsets plus a state-value net."""

    def __init__(self, obs_dim: int, n_heads: int = 5, n_choices: int = 120,
                 hidden: Sequence[int] = (64, 64, 64), seed: int = 0):
        rng = np.random.default_rng(seed)
        self.obs_dim = obs_dim
        self.n_heads = n_heads
        self.n_choices = n_choices
        self.hidden = tuple(hidden)
        # small output gain keeps the initial policy near uniform
        self.pi = MLP((obs_dim, *hidden, n_heads * n_choices), rng, out_gain=0.01)
        self.vf = MLP((obs_dim, *hidden, 1), rng, out_gain=1.0)

    def params(self) -> List[Array]:
        return self.pi.params() + self.vf.params()

    def logits(self, obs: Array) -> Tuple[Array, List[Array]]:
        z, cache = self.pi.forward(obs)
        return z.reshape(obs.shape[0], self.n_heads, self.n_choices), cache

    def values(self, obs: Array) -> Tuple[Array, List[Array]]:
        out, cache = self.vf.forward(obs)
        return out[:, 0], cache

    def act(self, obs: Array, rng: np.random.Generator) -> Tuple[Tuple[int, ...], float, float]:
        """Sample one action per head; returns (actions, log-prob, value)."""
        z, _ = self.logits(obs[None, :])
        logp = log_softmax(z[0])
        probs = np.exp(logp)
        actions = tuple(int(rng.choice(self.n_choices, p=probs[h]))
                        for h in range(self.n_heads))
        lp = float(sum(logp[h, a] for h, a in enumerate(actions)))
        value, _ = self.values(obs[None, :])
        return actions, lp, float(value[0])

    def greedy(self, obs: Array) -> Tuple[int, ...]:
        z, _ = self.logits(obs[None, :])
        return tuple(int(a) for a in z[0].argmax(axis=1))

    def evaluate(self, obs: Array, actions: Array) -> Dict[str, object]:
        """Batch log-probs, entropies, and values with caches for backward."""
        z, pi_cache = self.logits(obs)
        logp_all = log_softmax(z)
        b_idx = np.arange(obs.shape[0])[:, None]
        h_idx = np.arange(self.n_heads)[None, :]
        logp = logp_all[b_idx, h_idx, actions].sum(axis=1)
        probs = np.exp(logp_all)
        ent = -(probs * logp_all).sum(axis=(1, 2))
        values, vf_cache = self.values(obs)
        return {"logits": z, "logp_all": logp_all, "probs": probs,
                "logp": logp, "entropy": ent, "values": values,
                "pi_cache": pi_cache, "vf_cache": vf_cache}

    # ------------------------------------------------------- serialization
    def to_jsonable(self) -> Dict[str, object]:
        def dump(net: MLP) -> Dict[str, list]:
            return {"W": [w.tolist() for w in net.W],
                    "b": [b.tolist() for b in net.b]}
        return {"obs_dim": self.obs_dim, "n_heads": self.n_heads,
                "n_choices": self.n_choices, "hidden": list(self.hidden),
                "pi": dump(self.pi), "vf": dump(self.vf)}

    @classmethod
    def from_jsonable(cls, doc: Dict[str, object]) -> "PolicyValueNet":
        net = cls(int(doc["obs_dim"]), int(doc["n_heads"]),
                  int(doc["n_choices"]), tuple(doc["hidden"]))
        for mlp, key in ((net.pi, "pi"), (net.vf, "vf")):
            mlp.W = [np.asarray(w, dtype=float) for w in doc[key]["W"]]
            mlp.b = [np.asarray(b, dtype=float) for b in doc[key]["b"]]
        return net
