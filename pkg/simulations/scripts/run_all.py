"""Run every shipped scenario config through nsch_cli and build a summary JSON.

Each run is a subprocess so the CLI exit-code contract is exercised as-is. The batch then
scans `simulations/results` for the most recent JSON per SIM ID and aggregates the
metrics into `simulations/results/sim_summary_latest.json`.

Prerequisites: python -m pip install -r requirements.txt
"""
from __future__ import annotations
import subprocess, json, os, datetime, glob, sys, argparse

# (sim id, verb, config, accepted exit codes)
SIM_RUNS = [
    ('NSCH-EQUILIBRIUM', 'run', 'equilibrium.cfg', (0,)),
    ('NSCH-CH-EIGENMODE', 'run', 'ch_eigenmode.cfg', (0,)),
    ('NSCH-VISCOUS-EIGENMODE', 'run', 'viscous_eigenmode.cfg', (0,)),
    ('NSCH-COMPRESSIBLE-SPINODAL', 'run', 'compressible_spinodal.cfg', (0,)),
    ('NSCH-MANUFACTURED', 'run', 'manufactured.cfg', (0,)),
    ('NSCH-DENSITY-DRAIN', 'run', 'density_drain.cfg', (3,)),
    ('NSCH-MMS', 'mms', 'manufactured.cfg', (0,)),
]

RESULT_DIR = os.path.join('simulations','results')
SCRIPT_DIR = os.path.dirname(os.path.abspath(__file__))
CONFIG_DIR = os.path.join(os.path.dirname(SCRIPT_DIR), 'configs')


def run_config(verb: str, config: str, extra_args, accepted):
    path = os.path.join(CONFIG_DIR, config)
    if not os.path.isfile(path):
        print(f"[WARN] Missing config {config}")
        return None
    print(f"[RUN] nsch_cli.py {verb} {config}")
    cmd = [sys.executable, os.path.join(SCRIPT_DIR, 'nsch_cli.py'), verb, path] + extra_args
    code = subprocess.call(cmd)
    if code not in accepted:
        print(f"[ERROR] {verb} {config} exited with {code} (expected {accepted})")
    return code


def latest_json_for(sim_id: str):
    files = glob.glob(os.path.join(RESULT_DIR, f"sim_{sim_id}_*.json"))
    if not files:
        return None
    return max(files, key=os.path.getmtime)


def extract_metrics(fpath: str):
    try:
        with open(fpath,'r') as f:
            data = json.load(f)
        return {
            'id': data.get('id'),
            'timestamp': data.get('timestamp'),
            'metrics': data.get('metrics', {}),
            'figures': data.get('figures', [])
        }
    except Exception as e:
        return {'error': str(e), 'file': fpath}


def main(argv=None):
    ap = argparse.ArgumentParser()
    ap.add_argument('--cycle_tag', type=str, default=None, help='Label for this batch (embedded in figure filenames via suffix)')
    ap.add_argument('--skip_mms', action='store_true', help='Skip the manufactured-solution rate study')
    ap.add_argument('--no_figures', action='store_true')
    args = ap.parse_args(argv)
    os.makedirs(RESULT_DIR, exist_ok=True)
    now = datetime.datetime.now(datetime.timezone.utc)
    summary = {'generated_at': now.isoformat(), 'simulations': []}
    tag = args.cycle_tag or now.strftime('CYCLE%Y%m%dT%H%M%S')
    os.environ['SIM_CYCLE_TAG'] = tag
    extra = ['--quiet', '--out-dir', RESULT_DIR] + (['--no-figures'] if args.no_figures else [])
    failed = 0
    for sim_id, verb, config, accepted in SIM_RUNS:
        if verb == 'mms' and args.skip_mms:
            continue
        code = run_config(verb, config, extra, accepted)
        failed += code not in accepted
        latest = latest_json_for(sim_id)
        if latest:
            entry = extract_metrics(latest)
            entry['exit_code'] = code
            summary['simulations'].append(entry)
        else:
            summary['simulations'].append({'id': sim_id, 'error': 'no results json', 'exit_code': code})
    out_path = os.path.join(RESULT_DIR, 'sim_summary_latest.json')
    with open(out_path,'w') as f:
        json.dump(summary, f, indent=2)
    print('[SUMMARY] Wrote', out_path, '| Cycle tag:', tag, '| unexpected exit codes:', failed)
    return 1 if failed else 0


if __name__ == '__main__':
    raise SystemExit(main())
