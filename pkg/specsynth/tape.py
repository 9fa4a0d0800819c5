"""reverse mode differentiation over dense float64 arrays

every node is appended to a Tape with the ids of its inputs and a closure
mapping the output gradient to input gradients; inputs always have smaller
ids, so backward walks ids in descending order
"""
import numpy as np
from scipy import special

from specsynth.exceptions import ShapeMismatch, DomainError, NonScalarRoot
from specsynth.marginals import kron_subscripts, kron_sum


def _unbroadcast(grad, shape):
    """sum a broadcast gradient back down to `shape`"""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _broadcast_shape(a, b):
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeMismatch('shapes {} and {} do not broadcast'.format(a.shape, b.shape))


class Node(object):
    """one value on a tape"""

    def __init__(self, tape, id_, value, parents=(), backward=None, name=None):
        self.tape = tape
        self.id = id_
        self.value = value
        self.parents = tuple(parents)
        self.backward_fn = backward
        self.name = name

    @property
    def shape(self):
        return self.value.shape

    def __repr__(self):
        return 'Node(id={}, shape={})'.format(self.id, self.shape)

    def __add__(self, other):
        return self.tape.add(self, other)

    def __radd__(self, other):
        return self.tape.add(other, self)

    def __sub__(self, other):
        return self.tape.sub(self, other)

    def __rsub__(self, other):
        return self.tape.sub(other, self)

    def __mul__(self, other):
        return self.tape.mul(self, other)

    def __rmul__(self, other):
        return self.tape.mul(other, self)

    def __truediv__(self, other):
        return self.tape.div(self, other)

    def __rtruediv__(self, other):
        return self.tape.div(other, self)

    def __neg__(self):
        return self.tape.mul(-1.0, self)

    def __matmul__(self, other):
        return self.tape.matmul(self, other)


class Gradients(dict):
    """node id -> gradient, zero for nodes the root does not depend on"""

    def wrt(self, node):
        grad = self.get(node.id)
        if grad is None:
            return np.zeros(node.shape)
        return grad


class Tape(object):

    def __init__(self):
        self.nodes = []

    def __len__(self):
        return len(self.nodes)

    def _push(self, value, parents=(), backward=None, name=None):
        node = Node(self, len(self.nodes), np.asarray(value, dtype=np.float64), parents, backward, name)
        self.nodes.append(node)
        return node

    def variable(self, value, name=None):
        return self._push(np.array(value, dtype=np.float64), name=name)

    def constant(self, value):
        return self._push(np.array(value, dtype=np.float64))

    def lift(self, x):
        if isinstance(x, Node):
            if x.tape is not self:
                raise ShapeMismatch('node {} belongs to another tape'.format(x.id))
            return x
        return self.constant(x)

    # elementwise arithmetic

    def add(self, a, b):
        a, b = self.lift(a), self.lift(b)
        _broadcast_shape(a.value, b.value)
        return self._push(a.value + b.value, (a, b),
                          lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))

    def sub(self, a, b):
        a, b = self.lift(a), self.lift(b)
        _broadcast_shape(a.value, b.value)
        return self._push(a.value - b.value, (a, b),
                          lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)))

    def mul(self, a, b):
        a, b = self.lift(a), self.lift(b)
        _broadcast_shape(a.value, b.value)
        return self._push(a.value * b.value, (a, b),
                          lambda g: (_unbroadcast(g * b.value, a.shape), _unbroadcast(g * a.value, b.shape)))

    def div(self, a, b):
        a, b = self.lift(a), self.lift(b)
        _broadcast_shape(a.value, b.value)
        if np.any(b.value == 0.0):
            raise DomainError('division by zero')
        return self._push(a.value / b.value, (a, b),
                          lambda g: (_unbroadcast(g / b.value, a.shape),
                                     _unbroadcast(-g * a.value / (b.value * b.value), b.shape)))

    def maximum(self, a, b):
        """elementwise max, ties send the gradient to `a`"""
        a, b = self.lift(a), self.lift(b)
        _broadcast_shape(a.value, b.value)
        pick = a.value >= b.value
        return self._push(np.maximum(a.value, b.value), (a, b),
                          lambda g: (_unbroadcast(g * pick, a.shape), _unbroadcast(g * ~pick, b.shape)))

    # unary

    def abs(self, x):
        x = self.lift(x)
        return self._push(np.abs(x.value), (x,), lambda g: (g * np.sign(x.value),))

    def relu(self, x):
        x = self.lift(x)
        return self._push(np.maximum(x.value, 0.0), (x,), lambda g: (g * (x.value > 0.0),))

    def hinge(self, x):
        """max(x, 0)"""
        return self.relu(x)

    def exp(self, x):
        x = self.lift(x)
        out = np.exp(x.value)
        return self._push(out, (x,), lambda g: (g * out,))

    def log(self, x):
        x = self.lift(x)
        if np.any(x.value <= 0.0):
            raise DomainError('log of a non-positive value')
        return self._push(np.log(x.value), (x,), lambda g: (g / x.value,))

    def sqrt(self, x):
        x = self.lift(x)
        if np.any(x.value <= 0.0):
            raise DomainError('sqrt at a non-positive value')
        out = np.sqrt(x.value)
        return self._push(out, (x,), lambda g: (g / (2.0 * out),))

    def sigmoid(self, x):
        x = self.lift(x)
        out = special.expit(x.value)
        return self._push(out, (x,), lambda g: (g * out * (1.0 - out),))

    def softplus(self, x):
        """log(1 + exp(x))"""
        x = self.lift(x)
        return self._push(np.logaddexp(0.0, x.value), (x,), lambda g: (g * special.expit(x.value),))

    def log_sigmoid(self, x):
        x = self.lift(x)
        return self._push(special.log_expit(x.value), (x,), lambda g: (g * special.expit(-x.value),))

    # reductions

    def sum(self, x, axis=None):
        x = self.lift(x)

        def backward(g):
            if axis is not None:
                g = np.expand_dims(g, axis)
            return (np.broadcast_to(g, x.shape).copy(),)
        return self._push(x.value.sum(axis=axis), (x,), backward)

    def mean(self, x, axis=None):
        x = self.lift(x)
        count = x.value.size if axis is None else x.shape[axis]
        if count == 0:
            raise ShapeMismatch('mean over an empty axis')
        return self.mul(self.sum(x, axis), 1.0 / count)

    # linear algebra and reshaping

    def matmul(self, a, b):
        a, b = self.lift(a), self.lift(b)
        if a.value.ndim not in (1, 2) or b.value.ndim not in (1, 2) or a.shape[-1] != b.shape[0]:
            raise ShapeMismatch('cannot multiply {} by {}'.format(a.shape, b.shape))

        def backward(g):
            av, bv = a.value, b.value
            if av.ndim == 2 and bv.ndim == 2:
                return g @ bv.T, av.T @ g
            if av.ndim == 2:
                return np.outer(g, bv), av.T @ g
            if bv.ndim == 2:
                return bv @ g, np.outer(av, g)
            return g * bv, g * av
        return self._push(a.value @ b.value, (a, b), backward)

    def transpose(self, x):
        x = self.lift(x)
        return self._push(x.value.T, (x,), lambda g: (g.T,))

    def concat(self, xs, axis=1):
        xs = [self.lift(x) for x in xs]
        try:
            out = np.concatenate([x.value for x in xs], axis=axis)
        except ValueError as e:
            raise ShapeMismatch(str(e))
        bounds = np.cumsum([0] + [x.shape[axis] for x in xs])

        def backward(g):
            return tuple(np.take(g, np.arange(lo, hi), axis=axis) for lo, hi in zip(bounds[:-1], bounds[1:]))
        return self._push(out, xs, backward)

    def columns(self, x, selector):
        """x[:, selector] for a slice, index list or boolean mask"""
        x = self.lift(x)
        cols = np.arange(x.shape[1])[selector]

        def backward(g):
            grad = np.zeros(x.shape)
            np.add.at(grad, (slice(None), cols), g)
            return (grad,)
        return self._push(x.value[:, cols], (x,), backward)

    def rows(self, x, selector):
        x = self.lift(x)
        rows = np.arange(x.shape[0])[selector]

        def backward(g):
            grad = np.zeros(x.shape)
            np.add.at(grad, rows, g)
            return (grad,)
        return self._push(x.value[rows], (x,), backward)

    # one-hot blocks

    def block_softmax(self, x, offsets):
        """softmax over every column block [offsets[i], offsets[i+1])"""
        x = self.lift(x)
        out = np.empty(x.shape)
        spans = list(zip(offsets[:-1], offsets[1:]))
        for lo, hi in spans:
            out[:, lo:hi] = special.softmax(x.value[:, lo:hi], axis=1)

        def backward(g):
            grad = np.empty(x.shape)
            for lo, hi in spans:
                s = out[:, lo:hi]
                gs = g[:, lo:hi]
                grad[:, lo:hi] = s * (gs - (gs * s).sum(axis=1, keepdims=True))
            return (grad,)
        return self._push(out, (x,), backward)

    def straight_through(self, soft, hard):
        """value of `hard`, gradient passed to `soft` unchanged"""
        soft = self.lift(soft)
        hard = np.asarray(hard, dtype=np.float64)
        if hard.shape != soft.shape:
            raise ShapeMismatch('hard value {} does not match soft {}'.format(hard.shape, soft.shape))
        return self._push(hard, (soft,), lambda g: (g,))

    def kron_rows(self, blocks):
        """per row Kronecker product of row blocks, N x prod(sizes)"""
        blocks = [self.lift(b) for b in blocks]
        n = blocks[0].shape[0]
        if any(b.value.ndim != 2 or b.shape[0] != n for b in blocks):
            raise ShapeMismatch('kron_rows needs 2-d blocks with equal row counts')
        letters = 'abcdefghijklmnopqrstuvwxy'[:len(blocks)]
        per_row = ','.join('Z' + c for c in letters) + '->Z' + letters
        sizes = [b.shape[1] for b in blocks]
        out = np.einsum(per_row, *[b.value for b in blocks]).reshape(n, -1)

        def backward(g):
            g = g.reshape([n] + sizes)
            grads = []
            for k in range(len(blocks)):
                others = [j for j in range(len(blocks)) if j != k]
                spec = 'Z' + letters + ',' + ','.join('Z' + letters[j] for j in others) + '->Z' + letters[k]
                grads.append(np.einsum(spec, g, *[blocks[j].value for j in others]))
            return tuple(grads)
        return self._push(out, blocks, backward)

    def kron_sum(self, blocks, weights=None):
        """sum over rows of w_n * kron(blocks of row n), flattened row-major"""
        blocks = [self.lift(b) for b in blocks]
        n = blocks[0].shape[0]
        if any(b.value.ndim != 2 or b.shape[0] != n for b in blocks):
            raise ShapeMismatch('kron_sum needs 2-d blocks with equal row counts')
        parents = list(blocks)
        if weights is not None:
            weights = self.lift(weights)
            if weights.shape != (n,):
                raise ShapeMismatch('kron_sum weights {} do not match {} rows'.format(weights.shape, n))
            parents.append(weights)
        values = [b.value for b in blocks]
        w = None if weights is None else weights.value
        sizes = [b.shape[1] for b in blocks]
        out = kron_sum(values, w)
        letters = kron_subscripts(len(blocks)).split('->')[1]

        def backward(g):
            g = g.reshape(sizes)
            per_row = np.broadcast_to(g, [n] + sizes)
            grads = []
            for k in range(len(blocks)):
                others = [j for j in range(len(blocks)) if j != k]
                operands = [per_row] + [values[j] for j in others]
                spec = 'Z' + letters + ''.join(',Z' + letters[j] for j in others)
                if w is not None:
                    operands.append(w)
                    spec += ',Z'
                grads.append(np.einsum(spec + '->Z' + letters[k], *operands, optimize=True))
            if w is not None:
                spec = letters + ''.join(',Z' + c for c in letters) + '->Z'
                grads.append(np.einsum(spec, g, *values, optimize=True))
            return tuple(grads)
        return self._push(out, parents, backward)

    # differentiation

    def backward(self, root):
        """gradient of a scalar root with respect to every node it depends on"""
        if root.value.size != 1:
            raise NonScalarRoot('backward needs a scalar root, got shape {}'.format(root.shape))
        grads = Gradients()
        grads[root.id] = np.ones(root.shape)
        for node in reversed(self.nodes[:root.id + 1]):
            g = grads.get(node.id)
            if g is None or node.backward_fn is None:
                continue
            for parent, pg in zip(node.parents, node.backward_fn(g)):
                if parent.id in grads:
                    grads[parent.id] = grads[parent.id] + pg
                else:
                    grads[parent.id] = np.asarray(pg, dtype=np.float64).reshape(parent.shape)
        return grads


def backward(tape, root):
    return tape.backward(root)


class ArrayOps(object):
    """eager numpy twin of the tape primitives, used where no gradient is needed"""

    def constant(self, x):
        return np.asarray(x, dtype=np.float64)

    variable = constant
    lift = constant

    def add(self, a, b):
        return np.add(a, b)

    def sub(self, a, b):
        return np.subtract(a, b)

    def mul(self, a, b):
        return np.multiply(a, b)

    def div(self, a, b):
        if np.any(np.asarray(b) == 0.0):
            raise DomainError('division by zero')
        return np.divide(a, b)

    def maximum(self, a, b):
        return np.maximum(a, b)

    def abs(self, x):
        return np.abs(x)

    def relu(self, x):
        return np.maximum(x, 0.0)

    hinge = relu

    def exp(self, x):
        return np.exp(x)

    def log(self, x):
        if np.any(np.asarray(x) <= 0.0):
            raise DomainError('log of a non-positive value')
        return np.log(x)

    def sqrt(self, x):
        if np.any(np.asarray(x) <= 0.0):
            raise DomainError('sqrt at a non-positive value')
        return np.sqrt(x)

    def sigmoid(self, x):
        return special.expit(x)

    def softplus(self, x):
        return np.logaddexp(0.0, x)

    def log_sigmoid(self, x):
        return special.log_expit(x)

    def sum(self, x, axis=None):
        return np.sum(x, axis=axis)

    def mean(self, x, axis=None):
        return np.mean(x, axis=axis)

    def matmul(self, a, b):
        return np.asarray(a) @ np.asarray(b)

    def transpose(self, x):
        return np.asarray(x).T

    def concat(self, xs, axis=1):
        return np.concatenate(xs, axis=axis)

    def columns(self, x, selector):
        return np.asarray(x)[:, selector]

    def rows(self, x, selector):
        return np.asarray(x)[selector]

    def kron_sum(self, blocks, weights=None):
        return kron_sum(blocks, weights)


def value_of(x):
    return x.value if isinstance(x, Node) else np.asarray(x, dtype=np.float64)


def numeric_gradient(fn, x, h=1e-5):
    """central finite differences of a scalar function of one array"""
    x = np.array(x, dtype=np.float64)
    grad = np.zeros_like(x)
    flat = x.reshape(-1)
    out = grad.reshape(-1)
    for i in range(flat.size):
        keep = flat[i]
        flat[i] = keep + h
        up = float(fn(x))
        flat[i] = keep - h
        down = float(fn(x))
        flat[i] = keep
        out[i] = (up - down) / (2.0 * h)
    return grad
