"""column domains and the one-hot encoded table built on them"""
import hashlib
import json
from dataclasses import dataclass, field

import numpy as np

from specsynth.exceptions import SchemaError, UnknownColumn, EmptyTable

CATEGORICAL = 'categorical'
BINNED = 'binned-numeric'
ROLES = ('label', 'protected')


def _as_number(text):
    try:
        return float(text)
    except (TypeError, ValueError):
        return None


def format_number(value):
    value = float(value)
    if value.is_integer() and abs(value) < 1e15:
        return str(int(value))
    return repr(value)


@dataclass(frozen=True)
class ColumnSpec:
    name: str
    kind: str
    categories: tuple = ()
    bin_edges: tuple = ()
    representative_values: tuple = ()
    roles: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        if self.kind == CATEGORICAL:
            if not self.categories:
                raise SchemaError('column {} has no categories'.format(self.name))
            if len(set(self.categories)) != len(self.categories):
                raise SchemaError('column {} repeats a category'.format(self.name))
        elif self.kind == BINNED:
            edges = self.bin_edges
            if len(edges) < 2 or any(b <= a for a, b in zip(edges[:-1], edges[1:])):
                raise SchemaError('column {} needs strictly ascending bin edges'.format(self.name))
        else:
            raise SchemaError('column {} has unknown kind {}'.format(self.name, self.kind))
        if self.representative_values and len(self.representative_values) != self.size:
            raise SchemaError('column {} needs {} representative values'.format(self.name, self.size))
        unknown = set(self.roles) - set(ROLES)
        if unknown:
            raise SchemaError('column {} has unknown roles {}'.format(self.name, sorted(unknown)))

    @property
    def size(self):
        if self.kind == CATEGORICAL:
            return len(self.categories)
        return len(self.bin_edges) - 1

    @property
    def binned(self):
        return self.kind == BINNED

    @property
    def binary(self):
        return self.size == 2

    def values(self):
        """representative value per domain entry, used by the statistical operators

        bins default to their midpoints, categories to their numeric value when
        every category is a number and to their position otherwise
        """
        if self.representative_values:
            return np.asarray(self.representative_values, dtype=np.float64)
        if self.binned:
            edges = np.asarray(self.bin_edges, dtype=np.float64)
            return (edges[:-1] + edges[1:]) / 2.0
        numbers = [_as_number(c) for c in self.categories]
        if all(n is not None for n in numbers):
            return np.asarray(numbers, dtype=np.float64)
        return np.arange(self.size, dtype=np.float64)

    def labels(self):
        if not self.binned:
            return list(self.categories)
        edges = [format_number(e) for e in self.bin_edges]
        labels = ['[{},{})'.format(lo, hi) for lo, hi in zip(edges[:-2], edges[1:-1])]
        labels.append('[{},{}]'.format(edges[-2], edges[-1]))
        return labels

    def bin_indices(self, values):
        """half-open bins [e_i, e_i+1), the last bin closed; -1 marks values outside the edges"""
        values = np.asarray(values, dtype=np.float64)
        edges = np.asarray(self.bin_edges, dtype=np.float64)
        idx = np.searchsorted(edges, values, side='right') - 1
        idx = np.where(values == edges[-1], self.size - 1, idx)
        outside = (values < edges[0]) | (values > edges[-1]) | np.isnan(values)
        return np.where(outside, -1, idx)

    def export_values(self):
        """numeric cell written for each bin when decoding, always inside its bin"""
        reps = self.values()
        lo = np.asarray(self.bin_edges[:-1], dtype=np.float64)
        hi = np.asarray(self.bin_edges[1:], dtype=np.float64)
        inside = (reps >= lo) & ((reps < hi) | (np.arange(self.size) == self.size - 1) & (reps <= hi))
        return np.where(inside, reps, lo)

    def to_dict(self):
        d = {'name': self.name, 'kind': self.kind}
        if self.binned:
            d['bin_edges'] = list(self.bin_edges)
        else:
            d['categories'] = list(self.categories)
        if self.representative_values:
            d['representative_values'] = list(self.representative_values)
        if self.roles:
            d['roles'] = sorted(self.roles)
        return d

    @classmethod
    def from_dict(cls, d):
        try:
            name = d['name']
            kind = d['kind']
        except KeyError as e:
            raise SchemaError('schema column is missing {}'.format(e))
        return cls(name=name,
                   kind=kind,
                   categories=tuple(str(c) for c in d.get('categories', ())),
                   bin_edges=tuple(float(e) for e in d.get('bin_edges', ())),
                   representative_values=tuple(float(v) for v in d.get('representative_values', ())),
                   roles=frozenset(d.get('roles', ())))


class Schema(object):
    """ordered columns, their one-hot block offsets and roles"""

    def __init__(self, columns):
        self.columns = tuple(columns)
        names = [c.name for c in self.columns]
        if len(set(names)) != len(names):
            raise SchemaError('column names must be unique')
        if sum(1 for c in self.columns if 'label' in c.roles) > 1:
            raise SchemaError('at most one column may have the label role')
        sizes = [c.size for c in self.columns]
        self.block_offsets = np.concatenate([[0], np.cumsum(sizes)]).astype(np.int64)
        self._index = {name: i for i, name in enumerate(names)}

    def __len__(self):
        return len(self.columns)

    def __eq__(self, other):
        return isinstance(other, Schema) and self.columns == other.columns

    def __hash__(self):
        return hash(self.columns)

    @property
    def names(self):
        return [c.name for c in self.columns]

    @property
    def n_features(self):
        return len(self.columns)

    @property
    def width(self):
        return int(self.block_offsets[-1])

    @property
    def sizes(self):
        return [c.size for c in self.columns]

    def block(self, i):
        return slice(int(self.block_offsets[i]), int(self.block_offsets[i + 1]))

    def index(self, name):
        try:
            return self._index[name]
        except KeyError:
            raise UnknownColumn('unknown column {}'.format(name))

    def column(self, name):
        return self.columns[self.index(name)]

    @property
    def label_index(self):
        for i, c in enumerate(self.columns):
            if 'label' in c.roles:
                return i
        return None

    @property
    def protected_indices(self):
        return [i for i, c in enumerate(self.columns) if 'protected' in c.roles]

    def to_dict(self):
        return {'columns': [c.to_dict() for c in self.columns]}

    def hash(self):
        text = json.dumps(self.to_dict(), sort_keys=True, separators=(',', ':'))
        return hashlib.sha256(text.encode('utf-8')).hexdigest()

    @classmethod
    def from_dict(cls, d):
        if 'columns' not in d:
            raise SchemaError('schema document needs a columns list')
        return cls([ColumnSpec.from_dict(c) for c in d['columns']])


def load_schema(path):
    with open(path) as f:
        try:
            d = json.load(f)
        except ValueError as e:
            raise SchemaError('schema {} is not valid json: {}'.format(path, e))
    return Schema.from_dict(d)


class EncodedTable(object):
    """N x q one-hot matrix, one block per column, each row has exactly K ones"""

    def __init__(self, data, schema):
        data = np.asarray(data, dtype=np.float64)
        if data.size == 0:
            data = data.reshape(0, schema.width)
        if data.ndim != 2 or data.shape[1] != schema.width:
            raise SchemaError('encoded data of shape {} does not fit schema width {}'.format(data.shape, schema.width))
        self.data = data
        self.schema = schema

    @property
    def block_offsets(self):
        return self.schema.block_offsets

    @property
    def n_rows(self):
        return self.data.shape[0]

    def __len__(self):
        return self.n_rows

    def indices(self):
        """N x K matrix of category / bin indices"""
        out = np.zeros((self.n_rows, self.schema.n_features), dtype=np.int64)
        for i in range(self.schema.n_features):
            if self.n_rows:
                out[:, i] = np.argmax(self.data[:, self.schema.block(i)], axis=1)
        return out

    @classmethod
    def from_indices(cls, schema, indices):
        indices = np.asarray(indices, dtype=np.int64).reshape(-1, schema.n_features)
        data = np.zeros((indices.shape[0], schema.width), dtype=np.float64)
        rows = np.arange(indices.shape[0])
        for i in range(schema.n_features):
            data[rows, schema.block_offsets[i] + indices[:, i]] = 1.0
        return cls(data, schema)

    @classmethod
    def empty(cls, schema):
        return cls(np.zeros((0, schema.width)), schema)

    def is_valid(self):
        if self.n_rows == 0:
            return True
        if not np.all((self.data == 0.0) | (self.data == 1.0)):
            return False
        for i in range(self.schema.n_features):
            if not np.all(self.data[:, self.schema.block(i)].sum(axis=1) == 1.0):
                return False
        return True

    def rows(self, selector):
        return EncodedTable(self.data[selector], self.schema)

    def concat(self, other):
        return EncodedTable(np.vstack([self.data, other.data]), self.schema)

    def column_values(self, name):
        """representative value of every row for one column"""
        i = self.schema.index(name)
        return self.schema.columns[i].values()[self.indices()[:, i]]

    def split(self, k, fold, seed):
        """remaining rows and the held out rows of fold `fold` of a seeded k-fold partition"""
        if self.n_rows == 0:
            raise EmptyTable('cannot split an empty table')
        order = np.random.default_rng(seed).permutation(self.n_rows)
        folds = np.array_split(order, k)
        held = np.sort(folds[fold])
        rest = np.sort(np.concatenate([f for j, f in enumerate(folds) if j != fold]))
        return self.rows(rest), self.rows(held)
