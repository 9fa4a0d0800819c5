import argparse
import os
import sys
from contextlib import contextmanager

from specsynth.app import SynthApp
from specsynth.exceptions import SynthError, ValidationError, StageError, ProgramError
from specsynth.finetune import FinetuneConfig, compile_program, finetune, tune_weights, default_workload
from specsynth.generator import Generator
from specsynth.metrics import evaluate, summarize, summary_text, export_for_external_eval
from specsynth.parser import parse_file, format_program
from specsynth.pretrain import (PretrainConfig, pretrain, measure_targets, write_history, write_targets,
                                read_targets)
from specsynth.privacy import PrivacyLedger, dp_pretrain
from specsynth.program import DPCommand, SpecProgram
from specsynth.reader import load_csv, write_csv
from specsynth.sampler import rejection_sample
from specsynth.schema import load_schema
from specsynth.utils import atomic_path, atomic_write, canonical_json, file_hash, text_hash
from specsynth.validate import validate

logger = None
PROGRAM_SUFFIX = '.synth'


@contextmanager
def stage(name):
    """validation errors pass through, other failures carry the stage name"""
    logger.info('run.py, stage {} starting'.format(name))
    try:
        yield
    except ValidationError:
        raise
    except StageError:
        raise
    except Exception as e:
        raise StageError(name, e)
    logger.info('run.py, stage {} done'.format(name))


def parse_pairs(values, what):
    """name=value flags to a dict"""
    out = {}
    for item in values or []:
        name, sep, value = item.partition('=')
        if not sep or not name:
            raise ProgramError('{} expects name=value, got {!r}'.format(what, item))
        out[name.strip()] = value.strip()
    return out


def parse_lambdas(values):
    out = {}
    for name, value in parse_pairs(values, '--lambda').items():
        try:
            out[name] = float(value)
        except ValueError:
            raise ProgramError('--lambda {} needs a number, got {!r}'.format(name, value))
    return out


def parse_grids(values):
    out = {}
    for name, value in parse_pairs(values, '--grid').items():
        try:
            out[name] = [float(v) for v in value.split(',') if v.strip()]
        except ValueError:
            raise ProgramError('--grid {} needs comma separated numbers, got {!r}'.format(name, value))
    return out


def program_files(paths):
    """program files named directly or found under directories"""
    files = []
    for path in paths:
        if os.path.isdir(path):
            for root, _, names in sorted(os.walk(path)):
                files.extend(os.path.join(root, n) for n in sorted(names) if n.endswith(PROGRAM_SUFFIX))
        else:
            files.append(path)
    return files


def effective_dp(program, args):
    """privacy command of the program, with --epsilon and --delta taking precedence"""
    dp = program.dp
    if args.epsilon is None and args.delta is None:
        return dp
    epsilon = args.epsilon if args.epsilon is not None else (dp.epsilon if dp else None)
    delta = args.delta if args.delta is not None else (dp.delta if dp else 1e-9)
    if epsilon is None:
        raise ProgramError('--delta needs --epsilon or a differential privacy command')
    return DPCommand(epsilon, delta)


class Pipeline(object):
    """inputs, run directory and stages of one invocation"""

    def __init__(self, app, args):
        self.app = app
        self.args = args
        self.conf = app.conf
        self.seed = int(self.conf.get('SEED', 0))
        self.schema = load_schema(args.schema) if args.schema else None
        if args.program:
            self.program = parse_file(args.program)
        else:
            self.program = SpecProgram('data')
        self.dp = effective_dp(self.program, args)
        self.typed = validate(self.program, self.schema) if self.schema is not None else None
        self.lambdas = parse_lambdas(args.lambdas)
        self.run_dir = None
        self.train = None
        self.test = None

    # run directory and manifest

    def manifest(self):
        inputs = {}
        for key in ('data', 'schema', 'program', 'test', 'checkpoint', 'synthetic'):
            path = getattr(self.args, key, None)
            if path:
                inputs[key] = {'path': path, 'sha256': file_hash(path)}
        dp = None if self.dp is None else {'epsilon': self.dp.epsilon, 'delta': self.dp.delta}
        return {'command': self.args.command, 'inputs': inputs, 'seed': self.seed, 'overrides': self.app.overrides,
                'lambdas': self.lambdas, 'differential_privacy': dp}

    def open_run_dir(self):
        manifest = self.manifest()
        text = canonical_json(manifest)
        out = self.args.out or self.conf.get('OUTPUT_PATH', './runs/')
        self.run_dir = os.path.join(out, text_hash(text)[:16])
        os.makedirs(self.run_dir, exist_ok=True)
        atomic_write(self.path('manifest.json'), text)
        logger.info('run.py, run directory {}'.format(self.run_dir))
        return self.run_dir

    def path(self, *names):
        return os.path.join(self.run_dir, *names)

    # data

    def load_data(self):
        with stage('load'):
            table = load_csv(self.args.data, self.schema)
            if self.args.test:
                self.train, self.test = table, load_csv(self.args.test, self.schema)
            else:
                self.train, self.test = table.split(int(self.conf.get('TEST_FOLDS', 5)), 0, self.seed)
            logger.info('run.py, {} training rows, {} test rows'.format(self.train.n_rows, self.test.n_rows))

    def workload(self):
        return default_workload(self.schema)

    # stages

    def pretrain(self, seed, directory):
        """generator and the marginal targets fine-tuning matches against"""
        with stage('pretrain'):
            generator = Generator.init(self.schema, seed)
            if self.dp is not None:
                config = PretrainConfig.from_config(self.conf, private=True, seed=seed)
                ledger = PrivacyLedger(self.dp.epsilon, self.dp.delta)
                generator, ledger, measurements = dp_pretrain(generator, self.train, ledger, config)
                ledger.audit()
                ledger.to_csv(os.path.join(directory, 'ledger.csv'))
                targets = [m.target() for m in measurements]
            else:
                config = PretrainConfig.from_config(self.conf, seed=seed)
                generator, history = pretrain(generator, self.train, config, self.workload())
                write_history(history, os.path.join(directory, 'pretrain_log.csv'))
                targets = measure_targets(self.train, self.workload())
            write_targets(targets, self.schema, os.path.join(directory, 'targets.csv'))
            generator.save(os.path.join(directory, 'generator.ckpt'))
        return generator, targets

    def reference(self, generator, seed):
        """original rows without privacy, a model sample drawn before fine-tuning with it"""
        if self.dp is not None:
            return generator.sample(self.train.n_rows if self.train is not None else
                                    int(self.conf.get('FINETUNE_BATCH_SIZE', 15000)), seed)
        return self.train

    def noisy_targets(self, checkpoint):
        """targets.csv written next to a private checkpoint"""
        path = os.path.join(os.path.dirname(checkpoint), 'targets.csv')
        if not os.path.exists(path):
            raise SynthError('private fine-tuning needs the noisy marginals in {}'.format(path))
        return read_targets(path, self.schema)

    def finetune(self, generator, targets, reference, seed, directory):
        regularizers = compile_program(self.typed, self.lambdas)
        if not regularizers:
            logger.info('run.py, program has no specifications, skipping fine-tuning')
            return generator, regularizers
        with stage('finetune'):
            config = FinetuneConfig.from_config(self.conf, seed=seed)
            generator, history = finetune(generator, regularizers, targets, reference, config,
                                          os.path.join(directory, 'finetune_log.csv'))
            generator.save(os.path.join(directory, 'finetuned.ckpt'))
        return generator, regularizers

    def sample(self, generator, regularizers, seed, path):
        with stage('sample'):
            n = int(self.conf.get('N_SAMPLES', 10000))
            table = rejection_sample(generator, regularizers, n, self.conf.get('REJECTION_MAX_ROUNDS'), seed)
            for reg in regularizers:
                if reg.rejectable and not reg.satisfied(table):
                    raise SynthError('sample violates {}'.format(reg.name))
            with atomic_path(path) as tmp:
                write_csv(table, tmp)
        return table

    def evaluate(self, synthetic_path, regularizers, reference, seeds, prefix):
        """report recomputed from the written csv"""
        with stage('eval'):
            synthetic = load_csv(synthetic_path, self.schema)
            targets = measure_targets(self.train, self.workload()) if self.train is not None else ()
            report = evaluate(synthetic, self.test, targets, regularizers, reference, seeds)
            atomic_write(self.path(prefix + '.txt'), report.to_text())
            report.to_csv(self.path(prefix + '.csv'))
        return report

    def run(self):
        self.load_data()
        repeats = int(self.conf.get('REPEATS', 3))
        samples = int(self.conf.get('SAMPLES', 3))
        reports = []
        for r in range(repeats):
            seed = self.seed + 1000 * r
            directory = self.path('repeat_{}'.format(r))
            os.makedirs(directory, exist_ok=True)
            generator, targets = self.pretrain(seed, directory)
            reference = self.reference(generator, seed)
            generator, regularizers = self.finetune(generator, targets, reference, seed, directory)
            for s in range(samples):
                sample_seed = seed + s + 1
                path = os.path.join(directory, 'synthetic_{}.csv'.format(s))
                self.sample(generator, regularizers, sample_seed, path)
                seeds = {'train': seed, 'sample': sample_seed}
                reports.append(self.evaluate(path, regularizers, reference, seeds,
                                             os.path.join('repeat_{}'.format(r), 'report_{}'.format(s))))
        summary = summarize(reports)
        with atomic_path(self.path('summary.csv')) as tmp:
            summary.to_csv(tmp)
        atomic_write(self.path('summary.txt'), summary_text(summary))
        export_for_external_eval(self.train, self.test, self.path('export'), {'split': self.seed}, self.schema.hash())
        return summary


def command_check(args):
    """parse and, with a schema, validate every program; one line per file"""
    schema = load_schema(args.schema) if args.schema else None
    failed = 0
    for path in program_files(args.paths or ([args.program] if args.program else [])):
        try:
            program = parse_file(path)
            if schema is not None:
                validate(program, schema)
            print('{}: ok'.format(path))
        except ValidationError as e:
            failed += 1
            print('{}: {}'.format(path, e))
    return 2 if failed else 0


def command_fmt(args):
    paths = args.paths or [args.program]
    for path in paths:
        text = format_program(parse_file(path))
        if args.write:
            atomic_write(path, text)
        else:
            sys.stdout.write(text)
    return 0


def dispatch(app, args):
    if args.command == 'check':
        return command_check(args)
    if args.command == 'fmt':
        return command_fmt(args)

    pipeline = Pipeline(app, args)
    pipeline.open_run_dir()
    seed = pipeline.seed
    if args.command == 'run':
        print(summary_text(pipeline.run()))
    elif args.command == 'synth':
        pipeline.load_data()
        pipeline.pretrain(seed, pipeline.run_dir)
    elif args.command == 'finetune':
        pipeline.load_data()
        generator = Generator.load(args.checkpoint, pipeline.schema)
        if pipeline.dp is not None:
            targets = pipeline.noisy_targets(args.checkpoint)
        else:
            targets = measure_targets(pipeline.train, pipeline.workload())
        reference = pipeline.reference(generator, seed)
        write_targets(targets, pipeline.schema, pipeline.path('targets.csv'))
        pipeline.finetune(generator, targets, reference, seed, pipeline.run_dir)
    elif args.command == 'sample':
        generator = Generator.load(args.checkpoint, pipeline.schema)
        regularizers = compile_program(pipeline.typed, pipeline.lambdas)
        pipeline.sample(generator, regularizers, seed, pipeline.path('synthetic.csv'))
    elif args.command == 'eval':
        pipeline.load_data()
        regularizers = compile_program(pipeline.typed, pipeline.lambdas)
        report = pipeline.evaluate(args.synthetic, regularizers, pipeline.train, {'eval': seed}, 'report')
        print(report.to_text())
    elif args.command == 'tune':
        generator = Generator.load(args.checkpoint, pipeline.schema)
        if pipeline.dp is not None:
            # folds split a model sample, scores use the noisy marginals
            targets = pipeline.noisy_targets(args.checkpoint)
            table = pipeline.reference(generator, seed)
        else:
            pipeline.load_data()
            targets, table = None, pipeline.train
        with stage('tune'):
            frame = tune_weights(generator, pipeline.typed, table, parse_grids(args.grids), seed=seed,
                                 targets=targets)
            with atomic_path(pipeline.path('tuning.csv')) as tmp:
                frame.to_csv(tmp, index=False)
        print(frame.to_string(index=False))
    print(pipeline.run_dir)
    return 0


def build_parser():
    parser = argparse.ArgumentParser(description='synthesize tabular data under a specification program')
    parser.add_argument('command', choices=['run', 'synth', 'finetune', 'sample', 'eval', 'tune', 'fmt', 'check'],
                        help='pipeline stage to run')
    parser.add_argument('paths', nargs='*', help='program files or directories for check and fmt')
    parser.add_argument('--data', help='dataset csv')
    parser.add_argument('--schema', help='schema json')
    parser.add_argument('--program', help='specification program')
    parser.add_argument('--test', help='held out test csv, default splits --data')
    parser.add_argument('--checkpoint', help='generator checkpoint')
    parser.add_argument('--synthetic', help='synthetic csv to evaluate')
    parser.add_argument('--out', help='directory for run directories, default OUTPUT_PATH')
    parser.add_argument('--config', help='toml file overriding config.py values')
    parser.add_argument('--epsilon', type=float, default=None)
    parser.add_argument('--delta', type=float, default=None)
    parser.add_argument('--spend-remainder', dest='spend_remainder', default=None, action='store_true',
                        help='spend leftover privacy budget on a final round')
    parser.add_argument('--lambda', dest='lambdas', action='append', metavar='NAME=VALUE',
                        help='weight of a named specification, repeatable')
    parser.add_argument('--grid', dest='grids', action='append', metavar='NAME=V1,V2',
                        help='candidate weights for tune, repeatable')
    parser.add_argument('--seed', type=int, default=None)
    parser.add_argument('--n-samples', dest='n_samples', type=int, default=None)
    parser.add_argument('--max-rounds', dest='max_rounds', type=int, default=None)
    parser.add_argument('--repeats', type=int, default=None)
    parser.add_argument('--samples', type=int, default=None)
    parser.add_argument('--workload-degrade', dest='workload_degrade', default=None, action='store_true')
    parser.add_argument('--exclude-protected', dest='exclude_protected', default=None, action='store_true',
                        help='leave the protected column out of fairness surrogates')
    parser.add_argument('--write', default=False, action='store_true', help='fmt rewrites files in place')
    return parser


def required(args):
    needs = {'run': ('data', 'schema'), 'synth': ('data', 'schema'), 'finetune': ('data', 'schema', 'checkpoint'),
             'sample': ('schema', 'checkpoint'), 'eval': ('data', 'schema', 'synthetic'),
             'tune': ('data', 'schema', 'checkpoint', 'program')}
    missing = [k for k in needs.get(args.command, ()) if not getattr(args, k)]
    if args.command == 'fmt' and not (args.paths or args.program):
        missing.append('program')
    return missing


def main(argv=None):
    global logger
    parser = build_parser()
    args = parser.parse_args(argv)
    app = SynthApp()
    logger = app.logger
    logger.info('starting specsynth with {}'.format(args.command))
    missing = required(args)
    if missing:
        parser.error('{} needs --{}'.format(args.command, ', --'.join(missing)))
    try:
        if args.config:
            app.load_toml(args.config)
        app.override(SEED=args.seed, N_SAMPLES=args.n_samples, REJECTION_MAX_ROUNDS=args.max_rounds,
                     REPEATS=args.repeats, SAMPLES=args.samples, DP_SPEND_REMAINDER=args.spend_remainder,
                     WORKLOAD_DEGRADE=args.workload_degrade, SURROGATE_EXCLUDE_PROTECTED=args.exclude_protected)
        return dispatch(app, args)
    except ValidationError as e:
        logger.error('run.py, invalid input: {}'.format(e))
        return 2
    except (SynthError, OSError) as e:
        logger.error('run.py, {}'.format(e))
        return 1


if __name__ == '__main__':
    sys.exit(main())
