"""fully connected generator from gaussian noise to one-hot rows

hidden layers are relu with identity skips where the input and output widths
match; the linear head emits one logit per one-hot column and every column
block passes through a straight-through gumbel softmax
"""
import hashlib
import json
import struct

import numpy as np

from specsynth.app import get_config, get_logger
from specsynth.exceptions import CorruptCheckpoint, SchemaHashMismatch, ShapeMismatch
from specsynth.schema import EncodedTable
from specsynth.tape import ArrayOps
from specsynth.utils import atomic_write

MAGIC = b'SPSYNTH\x00'
VERSION = 1
SAMPLE_CHUNK = 10000


def gumbel_noise(shape, rng):
    u = rng.uniform(np.finfo(np.float64).tiny, 1.0, size=shape)
    return -np.log(-np.log(u))


def hard_one_hot(scores, offsets):
    """one-hot of the per block argmax"""
    out = np.zeros(scores.shape)
    rows = np.arange(scores.shape[0])
    for lo, hi in zip(offsets[:-1], offsets[1:]):
        out[rows, lo + np.argmax(scores[:, lo:hi], axis=1)] = 1.0
    return out


class Generator(object):

    def __init__(self, schema, params, noise_dim, hidden_dims, temperature=1.0):
        if temperature <= 0:
            raise ValueError('gumbel temperature must be positive, got {}'.format(temperature))
        self.schema = schema
        self.params = params
        self.noise_dim = int(noise_dim)
        self.hidden_dims = tuple(int(h) for h in hidden_dims)
        self.temperature = float(temperature)
        self.logger = get_logger()
        dims = self.dims
        for i, (d_in, d_out) in enumerate(zip(dims[:-1], dims[1:])):
            if params['W{}'.format(i)].shape != (d_in, d_out) or params['b{}'.format(i)].shape != (d_out,):
                raise ShapeMismatch('layer {} parameters do not fit {} -> {}'.format(i, d_in, d_out))

    @property
    def dims(self):
        return (self.noise_dim,) + self.hidden_dims + (self.schema.width,)

    @property
    def n_layers(self):
        return len(self.dims) - 1

    @classmethod
    def init(cls, schema, seed, noise_dim=None, hidden_dims=None, temperature=None):
        """fan-in scaled uniform weights, zero biases"""
        conf = get_config()
        noise_dim = conf.get('NOISE_DIM', 100) if noise_dim is None else noise_dim
        hidden_dims = conf.get('HIDDEN_DIMS', (100, 200, 200, 200)) if hidden_dims is None else hidden_dims
        temperature = conf.get('GUMBEL_TEMPERATURE', 1.0) if temperature is None else temperature
        rng = np.random.default_rng(seed)
        dims = (int(noise_dim),) + tuple(hidden_dims) + (schema.width,)
        params = {}
        for i, (d_in, d_out) in enumerate(zip(dims[:-1], dims[1:])):
            bound = 1.0 / np.sqrt(d_in)
            params['W{}'.format(i)] = rng.uniform(-bound, bound, size=(d_in, d_out))
            params['b{}'.format(i)] = np.zeros(d_out)
        return cls(schema, params, noise_dim, hidden_dims, temperature)

    def copy(self):
        return Generator(self.schema, {k: v.copy() for k, v in self.params.items()},
                         self.noise_dim, self.hidden_dims, self.temperature)

    def noise(self, n, rng):
        return rng.standard_normal((n, self.noise_dim))

    def _residual(self, i):
        return 0 < i < self.n_layers - 1 and self.dims[i] == self.dims[i + 1]

    def logits(self, ops, z, params):
        h = z
        for i in range(self.n_layers):
            out = ops.add(ops.matmul(h, params['W{}'.format(i)]), params['b{}'.format(i)])
            if i == self.n_layers - 1:
                return out
            out = ops.relu(out)
            h = ops.add(out, h) if self._residual(i) else out

    def forward(self, tape, z, rng):
        """batch node whose value is exactly one-hot, gradients flow through the soft softmax

        returns the batch node and the parameter nodes by name
        """
        nodes = {name: tape.variable(value, name=name) for name, value in self.params.items()}
        logits = self.logits(tape, tape.constant(z), nodes)
        perturbed = tape.add(logits, gumbel_noise(logits.shape, rng))
        soft = tape.block_softmax(tape.mul(perturbed, 1.0 / self.temperature), self.schema.block_offsets)
        hard = hard_one_hot(perturbed.value, self.schema.block_offsets)
        return tape.straight_through(soft, hard), nodes

    def _numpy_logits(self, z):
        return self.logits(ArrayOps(), z, self.params)

    def sample(self, n, seed):
        """n hard rows from seeded noise, computed in chunks without a tape"""
        rng = np.random.default_rng(seed)
        chunks = []
        remaining = int(n)
        while remaining > 0:
            size = min(remaining, SAMPLE_CHUNK)
            logits = self._numpy_logits(self.noise(size, rng))
            logits = logits + gumbel_noise(logits.shape, rng)
            chunks.append(hard_one_hot(logits, self.schema.block_offsets))
            remaining -= size
        if not chunks:
            return EncodedTable.empty(self.schema)
        return EncodedTable(np.vstack(chunks), self.schema)

    # checkpoints

    def to_bytes(self):
        names = sorted(self.params)
        header = {'noise_dim': self.noise_dim,
                  'hidden_dims': list(self.hidden_dims),
                  'temperature': self.temperature,
                  'arrays': [[name, list(self.params[name].shape)] for name in names]}
        meta = json.dumps(header, sort_keys=True, separators=(',', ':')).encode('utf-8')
        body = [MAGIC, struct.pack('<H', VERSION), self.schema.hash().encode('ascii'),
                struct.pack('<I', len(meta)), meta]
        body.extend(np.ascontiguousarray(self.params[name], dtype='<f8').tobytes() for name in names)
        blob = b''.join(body)
        return blob + hashlib.sha256(blob).digest()

    def save(self, path):
        atomic_write(path, self.to_bytes())
        self.logger.info('generator.py, checkpoint saved to {}'.format(path))

    @classmethod
    def from_bytes(cls, data, schema):
        if len(data) < len(MAGIC) + 2 + 64 + 4 + 32 or not data.startswith(MAGIC):
            raise CorruptCheckpoint('not a generator checkpoint')
        blob, digest = data[:-32], data[-32:]
        if hashlib.sha256(blob).digest() != digest:
            raise CorruptCheckpoint('checkpoint digest does not match its contents')
        pos = len(MAGIC)
        version, = struct.unpack_from('<H', blob, pos)
        if version != VERSION:
            raise CorruptCheckpoint('unsupported checkpoint version {}'.format(version))
        pos += 2
        schema_hash = blob[pos:pos + 64].decode('ascii')
        pos += 64
        if schema_hash != schema.hash():
            raise SchemaHashMismatch('checkpoint was trained on a different schema')
        meta_len, = struct.unpack_from('<I', blob, pos)
        pos += 4
        try:
            header = json.loads(blob[pos:pos + meta_len].decode('utf-8'))
        except ValueError:
            raise CorruptCheckpoint('checkpoint header is not readable')
        pos += meta_len
        params = {}
        for name, shape in header['arrays']:
            count = int(np.prod(shape))
            end = pos + 8 * count
            if end > len(blob):
                raise CorruptCheckpoint('checkpoint is truncated at {}'.format(name))
            params[name] = np.frombuffer(blob[pos:end], dtype='<f8').astype(np.float64).reshape(shape)
            pos = end
        if pos != len(blob):
            raise CorruptCheckpoint('checkpoint has trailing bytes')
        return cls(schema, params, header['noise_dim'], header['hidden_dims'], header['temperature'])

    @classmethod
    def load(cls, path, schema):
        with open(path, 'rb') as f:
            return cls.from_bytes(f.read(), schema)
