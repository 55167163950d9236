import os

import pytest

from hadrl.scripts.cli import main

SMALL = ['--trunk', '16', '--value-width', '8', '--warmup', '16', '--batch-size', '8',
         '--eval-every', '1', '--eval-episodes', '1']

UNREACHABLE = """
[network]
hosts = 2
subnets = 2
subnet_of = 0,1
adjacency =

[flags]
hosts = 1

[agent]
foothold = 0
"""


def _out(capsys):
    return capsys.readouterr().out.splitlines()


def test_plan(capsys):
    assert main(['plan', '--actions', '1000', '--max-branch', '10']) == 0
    assert _out(capsys) == ['levels=3 radices=10,10,10 capacity=1000']
    assert main(['plan', '--actions', '1', '--max-branch', '10']) == 0
    assert _out(capsys) == ['levels=1 radices=1 capacity=1']
    assert main(['plan', '--actions', '4646']) == 0
    assert _out(capsys)[0].startswith('levels=4 ')


@pytest.mark.parametrize('argv', [
    ['plan', '--actions', '0'],
    ['plan', '--actions', '10', '--max-branch', '1'],
    ['plan', '--actions', 'many'],
    ['launch'],
    ['oracle', '--scenario', 'tiny', '--colour', 'red'],
    [],
])
def test_usage_errors(argv, capsys):
    assert main(argv) == 2
    assert 'usage' in capsys.readouterr().err


def test_enumerate(capsys):
    assert main(['enumerate', '--scenario', 'tiny']) == 0
    lines = _out(capsys)
    assert len(lines) == 84
    assert lines[0] == '0 ServiceScan 0 1'
    assert lines[61] == '61 SubnetScan 0 1'
    assert lines[72] == '72 OSInfo 0 -'


def test_oracle(capsys):
    assert main(['oracle', '--scenario', 'tiny']) == 0
    assert _out(capsys) == ['min_steps=3 max_return=10.0']
    assert main(['oracle', '--scenario', 'tiny']) == 0
    assert _out(capsys) == ['min_steps=3 max_return=10.0']


def test_oracle_unreachable(tmp_path, capsys):
    path = tmp_path / 'split.ini'
    path.write_text(UNREACHABLE)
    assert main(['oracle', '--scenario', str(path)]) == 1
    assert 'no action sequence captures every flag' in capsys.readouterr().err


def test_bad_scenario_file(tmp_path, capsys):
    path = tmp_path / 'broken.ini'
    path.write_text(UNREACHABLE.replace('foothold = 0', 'foothold = 1'))
    argv = ['train', '--scenario', str(path), '--episodes', '1', '--out', str(tmp_path / 'r')]
    assert main(argv) == 1
    assert 'foothold must not be a flag host' in capsys.readouterr().err


def test_train_zero_episodes(tmp_path, capsys):
    out = tmp_path / 'run'
    argv = ['train', '--scenario', 'tiny', '--episodes', '0', '--seed', '1', '--out', str(out)]
    assert main(argv + SMALL) == 0
    assert _out(capsys)[0].startswith('final_return=')
    assert (out / 'metrics.csv').read_text() == (
        'episode,return,steps,epsilon,loss_mean,eval_return,eval_steps,wall_ms,seed\n')


def test_train_is_reproducible(tmp_path):
    for name in ('a', 'b'):
        argv = ['train', '--scenario', 'tiny', '--episodes', '3', '--seed', '5',
                '--out', str(tmp_path / name)]
        assert main(argv + SMALL) == 0
    a = (tmp_path / 'a' / 'metrics.csv').read_bytes()
    assert a == (tmp_path / 'b' / 'metrics.csv').read_bytes()
    assert len(a.splitlines()) == 4


def test_keep_last_is_recorded(tmp_path):
    out = tmp_path / 'run'
    argv = ['train', '--scenario', 'tiny', '--episodes', '1', '--keep-last', '--out', str(out)]
    assert main(argv + SMALL) == 0
    assert 'keep_best = False' in (out / 'run.ini').read_text()


def test_baseline_head_width(tmp_path):
    out = tmp_path / 'run'
    argv = ['train', '--scenario', 'tiny', '--algo', 'ddqn', '--episodes', '0',
            '--out', str(out)]
    assert main(argv + SMALL) == 0
    manifest = (out / 'checkpoint' / 'manifest.ini').read_text()
    assert 'radices = 84' in manifest
    assert 'algo = ddqn' in manifest


def test_eval_and_dump(tmp_path, capsys):
    out = tmp_path / 'run'
    argv = ['train', '--scenario', 'tiny', '--episodes', '2', '--out', str(out)]
    assert main(argv + SMALL) == 0
    capsys.readouterr()
    checkpoint = str(out / 'checkpoint')

    argv = ['eval', '--checkpoint', checkpoint, '--scenario', 'tiny', '--episodes', '2',
            '--seed', '0']
    assert main(argv) == 0
    line, = _out(capsys)
    assert line.startswith('mean_return=') and ' mean_steps=' in line
    assert main(argv) == 0
    assert _out(capsys) == [line]

    emb = tmp_path / 'emb.csv'
    argv = ['dump-embeddings', '--checkpoint', checkpoint, '--scenario', 'tiny',
            '--episodes', '1', '--seed', '0', '--out', str(emb)]
    assert main(argv) == 0
    rows = int(_out(capsys)[0].split('=')[1])
    assert len(emb.read_text().splitlines()) == rows + 1


def test_eval_on_the_wrong_scenario(tmp_path, capsys):
    out = tmp_path / 'run'
    assert main(['train', '--scenario', 'tiny', '--episodes', '0', '--out', str(out)]
                + SMALL) == 0
    argv = ['eval', '--checkpoint', str(out / 'checkpoint'), '--scenario', 's6']
    assert main(argv) == 1
    assert 'checkpoint covers 84 actions' in capsys.readouterr().err


def test_dump_on_the_wrong_scenario(tmp_path, capsys):
    out = tmp_path / 'run'
    assert main(['train', '--scenario', 'tiny', '--episodes', '0', '--out', str(out)]
                + SMALL) == 0
    emb = tmp_path / 'emb.csv'
    argv = ['dump-embeddings', '--checkpoint', str(out / 'checkpoint'), '--scenario', 's6',
            '--out', str(emb)]
    assert main(argv) == 1
    assert 'checkpoint covers 84 actions, scenario has 90' in capsys.readouterr().err
    assert not emb.exists()


def test_eval_missing_checkpoint(tmp_path):
    argv = ['eval', '--checkpoint', str(tmp_path), '--scenario', 'tiny']
    assert main(argv) == 1


def test_compare(tmp_path, capsys):
    for algo in ('hadrl', 'ddqn'):
        argv = ['train', '--scenario', 'tiny', '--algo', algo, '--episodes', '2',
                '--seeds', '1', '2', '--processes', '1', '--out', str(tmp_path / algo)]
        assert main(argv + SMALL) == 0
    capsys.readouterr()
    summary = tmp_path / 'summary.txt'
    argv = ['compare', '--a', str(tmp_path / 'hadrl' / 'seed1'), str(tmp_path / 'hadrl' / 'seed2'),
            '--b', str(tmp_path / 'ddqn' / 'seed1'), str(tmp_path / 'ddqn' / 'seed2'),
            '--out', str(summary)]
    assert main(argv) == 0
    lines = _out(capsys)
    assert lines[0] == 'threshold=9.0'
    assert lines[1:3] == ['algo_a=hadrl', 'algo_b=ddqn']
    assert lines[3].startswith('seed=1 a=')
    assert lines[-2].startswith('success_a=')
    assert summary.read_text().splitlines() == lines


def test_compare_mismatched_seeds(tmp_path, capsys):
    for seed in ('1', '2'):
        argv = ['train', '--scenario', 'tiny', '--episodes', '0', '--seed', seed,
                '--out', str(tmp_path / seed)]
        assert main(argv + SMALL) == 0
    argv = ['compare', '--a', str(tmp_path / '1'), '--b', str(tmp_path / '2'),
            '--threshold', '9']
    assert main(argv) == 1
    assert 'seed sets differ' in capsys.readouterr().err
