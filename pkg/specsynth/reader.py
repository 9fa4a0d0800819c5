import csv

import numpy as np
import pandas as pd

from specsynth.app import get_config, get_logger
from specsynth.exceptions import UnknownColumn, OutOfDomainValue, RaggedRow
from specsynth.schema import EncodedTable


class CsvTableReader(object):
    """file like object used to read a dataset csv against a schema

    the header names the columns (any order), every following line is one row;
    cells are mapped to category indices or to half-open numeric bins
    """

    def __init__(self, file_, schema, max_rows=None):
        self._file = file_
        self.schema = schema
        self.read_count = 0   # needed for logging
        self.logger = get_logger()
        if max_rows is None:
            max_rows = get_config().get('MAX_ROWS', -1)
        self.max_rows = max_rows
        self.logger.info('reader.py, csv ingest, file {}'.format(self._file))
        self._iostream = open(file_, 'r', newline='')
        self._reader = csv.reader(self._iostream)
        try:
            self.header = self._read_header()
        except UnknownColumn:
            self.close()
            raise

    def __enter__(self, *args, **kwargs):
        return self

    def __exit__(self, *args, **kwargs):
        self.close()

    def __iter__(self):
        return self

    def __next__(self):
        if self.max_rows > 0 and self.read_count >= self.max_rows:
            raise StopIteration
        cells = next(self._reader)
        while not cells:
            cells = next(self._reader)
        if len(cells) != len(self.header):
            raise RaggedRow(self.read_count, len(self.header), len(cells))
        self.read_count += 1
        if self.read_count % 100000 == 0:
            self.logger.debug('reader.py, csv ingest, count = {}'.format(self.read_count))
        return [c.strip() for c in cells]

    def close(self):
        self._iostream.close()

    def _read_header(self):
        try:
            header = [h.strip() for h in next(self._reader)]
        except StopIteration:
            header = []
        unknown = [h for h in header if h not in self.schema.names]
        if unknown:
            raise UnknownColumn('csv {} has columns not in the schema: {}'.format(self._file, unknown))
        missing = [n for n in self.schema.names if n not in header]
        if missing:
            raise UnknownColumn('csv {} is missing schema columns: {}'.format(self._file, missing))
        return header

    def read_table(self):
        rows = list(self)
        self.logger.info('reader.py, csv ingest, processed {}, contained {} rows'.format(self._file, self.read_count))
        if not rows:
            return EncodedTable.empty(self.schema)
        cells = np.asarray(rows, dtype=object)
        indices = np.zeros((len(rows), self.schema.n_features), dtype=np.int64)
        for i, column in enumerate(self.schema.columns):
            indices[:, i] = self.encode_column(column, cells[:, self.header.index(column.name)])
        return EncodedTable.from_indices(self.schema, indices)

    @staticmethod
    def encode_column(column, cells):
        """category or bin index for every cell of one column"""
        if column.binned:
            values = pd.to_numeric(pd.Series(cells), errors='coerce').to_numpy(dtype=np.float64)
            idx = column.bin_indices(values)
        else:
            lookup = {c: j for j, c in enumerate(column.categories)}
            idx = pd.Series(cells).map(lookup).fillna(-1).to_numpy(dtype=np.int64)
        bad = np.flatnonzero(idx < 0)
        if len(bad):
            raise OutOfDomainValue(int(bad[0]), column.name, cells[bad[0]])
        return idx


def load_csv(path, schema, max_rows=None):
    with CsvTableReader(path, schema, max_rows) as r:
        return r.read_table()


def decode(table):
    """human readable frame: category labels and, for binned columns, a numeric value inside each bin"""
    indices = table.indices()
    frame = {}
    for i, column in enumerate(table.schema.columns):
        if column.binned:
            frame[column.name] = column.export_values()[indices[:, i]]
        else:
            frame[column.name] = np.asarray(column.categories, dtype=object)[indices[:, i]]
    return pd.DataFrame(frame, columns=table.schema.names)


def write_csv(table, path):
    decode(table).to_csv(path, index=False)
