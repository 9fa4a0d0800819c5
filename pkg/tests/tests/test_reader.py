import sys
import os
PROJECT_HOME = os.path.abspath(os.path.join(os.path.dirname(__file__), '../../'))
sys.path.append(PROJECT_HOME)

import shutil
import tempfile
import unittest
import numpy as np
from mock import patch

from specsynth.exceptions import OutOfDomainValue, RaggedRow, UnknownColumn
from specsynth.reader import CsvTableReader, load_csv, decode, write_csv
from specsynth.schema import load_schema

DATA = os.path.join(PROJECT_HOME, 'tests/data/')


class TestReader(unittest.TestCase):

    def setUp(self):
        self.schema = load_schema(os.path.join(DATA, 'toy_schema.json'))
        self.tmp = tempfile.mkdtemp()

    def tearDown(self):
        shutil.rmtree(self.tmp)

    def write(self, name, text):
        path = os.path.join(self.tmp, name)
        with open(path, 'w') as f:
            f.write(text)
        return path

    def test_toy_csv(self):
        table = load_csv(os.path.join(DATA, 'toy.csv'), self.schema)
        self.assertEqual(table.n_rows, 10)
        self.assertTrue(table.is_valid())
        indices = table.indices()
        self.assertEqual(list(indices[0]), [0, 0, 0, 0])
        self.assertEqual(list(indices[1]), [1, 1, 1, 1])
        # 35 opens the second bin, 80 closes the last one
        self.assertEqual(indices[6, 0], 1)
        self.assertEqual(indices[7, 0], 2)

    def test_max_rows(self):
        table = load_csv(os.path.join(DATA, 'toy.csv'), self.schema, max_rows=3)
        self.assertEqual(table.n_rows, 3)

    def test_header_in_any_order(self):
        path = self.write('swapped.csv', 'salary,age,workclass,sex\n>50K,40,Gov,Female\n')
        table = load_csv(path, self.schema)
        self.assertEqual(list(table.indices()[0]), [1, 1, 1, 1])

    def test_out_of_domain(self):
        path = self.write('bad.csv', 'age,sex,workclass,salary\n22,Male,Private,<=50K\n30,Other,Gov,>50K\n')
        with self.assertRaises(OutOfDomainValue) as cm:
            load_csv(path, self.schema)
        self.assertEqual(cm.exception.row, 1)
        self.assertEqual(cm.exception.column, 'sex')
        path = self.write('old.csv', 'age,sex,workclass,salary\n90,Male,Private,<=50K\n')
        with self.assertRaises(OutOfDomainValue):
            load_csv(path, self.schema)
        path = self.write('nan.csv', 'age,sex,workclass,salary\nold,Male,Private,<=50K\n')
        with self.assertRaises(OutOfDomainValue):
            load_csv(path, self.schema)

    def test_ragged_and_unknown_columns(self):
        path = self.write('ragged.csv', 'age,sex,workclass,salary\n22,Male,Private\n')
        with self.assertRaises(RaggedRow):
            load_csv(path, self.schema)
        path = self.write('extra.csv', 'age,sex,workclass,salary,height\n22,Male,Private,<=50K,180\n')
        with self.assertRaises(UnknownColumn):
            load_csv(path, self.schema)
        path = self.write('missing.csv', 'age,sex,workclass\n22,Male,Private\n')
        with self.assertRaises(UnknownColumn):
            load_csv(path, self.schema)

    def test_header_error_closes_file(self):
        path = self.write('extra.csv', 'age,sex,workclass,salary,height\n22,Male,Private,<=50K,180\n')
        handles = []

        def tracked(*args, **kwargs):
            handles.append(open(*args, **kwargs))
            return handles[-1]
        with patch('specsynth.reader.open', side_effect=tracked, create=True):
            with self.assertRaises(UnknownColumn):
                CsvTableReader(path, self.schema)
        self.assertEqual(len(handles), 1)
        self.assertTrue(handles[0].closed)

    def test_empty_csv(self):
        path = self.write('empty.csv', 'age,sex,workclass,salary\n')
        with CsvTableReader(path, self.schema) as reader:
            table = reader.read_table()
        self.assertEqual(table.n_rows, 0)

    def test_decode_and_reload(self):
        table = load_csv(os.path.join(DATA, 'toy.csv'), self.schema)
        frame = decode(table)
        self.assertEqual(list(frame.columns), self.schema.names)
        self.assertEqual(frame['age'].iloc[0], 26.5)
        self.assertEqual(frame['salary'].iloc[1], '>50K')
        path = os.path.join(self.tmp, 'decoded.csv')
        write_csv(table, path)
        again = load_csv(path, self.schema)
        self.assertTrue(np.array_equal(again.data, table.data))


if __name__ == '__main__':
    unittest.main(verbosity=2)
