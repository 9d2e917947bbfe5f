"""Command-line entry points.

Subcommands: index, features, table3, emd, abstract, solve, evaluate,
experiment, game.  The data directory for cached indices, feature tables
and abstraction maps comes from --data-dir or N211_DATA_DIR.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from pathlib import Path

import numpy as np


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--data-dir", default=None, help="cache directory (N211_DATA_DIR)")
    p.add_argument("--threads", type=int, default=1,
                   help="worker threads for table builds")
    p.add_argument("--deterministic", action="store_true",
                   help="assert the deterministic single-threaded mode (always on; "
                        "solves and clustering are seeded and single-threaded)")


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="numeral211",
                                 description="Numeral211 Hold'em abstraction toolkit")
    sub = ap.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("index", help="build and persist the canonical observation index")
    _add_common(p)
    p.add_argument("--out", default=None, help="output directory (default: data dir)")
    p.add_argument("--csv", action="store_true", help="also export CSV files")

    p = sub.add_parser("features", help="build winrate feature tables")
    _add_common(p)
    p.add_argument("--phase", type=int, choices=(1, 2, 3), required=True)
    p.add_argument("--recall", type=int, default=0)
    p.add_argument("--out", default=None)
    p.add_argument("--csv", action="store_true")

    p = sub.add_parser("table3", help="print/export the class-count table")
    _add_common(p)
    p.add_argument("--out", default=None, help="CSV output path")

    p = sub.add_parser("emd", help="earth mover's distance between two histograms")
    p.add_argument("--p", required=True, help="comma-separated masses")
    p.add_argument("--q", required=True)
    p.add_argument("--matrix", default=None, help="ground-distance matrix file")

    p = sub.add_parser("abstract", help="build an abstraction map")
    _add_common(p)
    p.add_argument("--algo", required=True,
                   help="krwemd | ehs | li | pawi | paoi | krwi | kroi")
    p.add_argument("--phase", type=int, choices=(1, 2, 3), required=True)
    p.add_argument("--recall", type=int, default=None)
    p.add_argument("--weights", default=None, help="phase weights, e.g. 7,5,3")
    p.add_argument("--buckets", type=int, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)

    p = sub.add_parser("solve", help="run CSMCCFR on a pair of abstraction maps")
    _add_common(p)
    p.add_argument("--abs1", required=True, help="player 1 abstraction map (or 'li')")
    p.add_argument("--abs2", required=True)
    p.add_argument("--iters", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--batch", type=int, default=8192)
    p.add_argument("--checkpoint-every", type=int, default=0)
    p.add_argument("--out", required=True, help="final checkpoint path")

    p = sub.add_parser("evaluate", help="exact exploitability of a strategy pair")
    _add_common(p)
    p.add_argument("--strategy1", required=True, help="checkpoint file (player 1 side)")
    p.add_argument("--strategy2", required=True, help="checkpoint file (player 2 side)")
    p.add_argument("--csv", default=None, help="append a curve row to this CSV")

    p = sub.add_parser("experiment", help="run an experiment config")
    _add_common(p)
    p.add_argument("config", help="INI experiment file")

    p = sub.add_parser("game", help="debug: betting tree and hand evaluation")
    p.add_argument("--tree", action="store_true", help="print the betting tree")
    p.add_argument("--deal", default=None,
                   help="evaluate a deal, e.g. 'AsAh/Td2c/3s4h' (p1/p2/board)")

    args = ap.parse_args(argv)
    if getattr(args, "data_dir", None):
        os.environ["N211_DATA_DIR"] = args.data_dir
    return _dispatch(args)


def _dispatch(args) -> int:
    if args.cmd == "index":
        return _cmd_index(args)
    if args.cmd == "features":
        return _cmd_features(args)
    if args.cmd == "table3":
        return _cmd_table3(args)
    if args.cmd == "emd":
        return _cmd_emd(args)
    if args.cmd == "abstract":
        return _cmd_abstract(args)
    if args.cmd == "solve":
        return _cmd_solve(args)
    if args.cmd == "evaluate":
        return _cmd_evaluate(args)
    if args.cmd == "experiment":
        return _cmd_experiment(args)
    if args.cmd == "game":
        return _cmd_game(args)
    raise AssertionError(args.cmd)


def _out_dir(args) -> Path:
    from .experiments import data_dir

    d = Path(args.out) if getattr(args, "out", None) else data_dir()
    d.mkdir(parents=True, exist_ok=True)
    return d


def _cmd_index(args) -> int:
    from .signal_index import export_index_csv, get_signal_index, save_index_phase

    index = get_signal_index()
    out = _out_dir(args)
    for phase in (1, 2, 3):
        path = out / f"signal_index_phase{phase}.sigx"
        save_index_phase(index, phase, path)
        print(f"phase {phase}: {index.count(phase)} classes -> {path}")
        if args.csv:
            export_index_csv(index, phase, out / f"signal_index_phase{phase}.csv")
    return 0


def _cmd_features(args) -> int:
    from .features import FeatureSet, export_features_csv, save_feature_table

    fs = FeatureSet(workers=args.threads)
    out = _out_dir(args)
    path = out / f"krwf_phase{args.phase}_k{args.recall}.krwf"
    save_feature_table(fs, args.phase, args.recall, path)
    rwi = fs.count_krwi_classes(args.phase, args.recall)
    roi = fs.count_kroi_classes(args.phase, args.recall)
    print(f"phase {args.phase} recall {args.recall}: "
          f"winrate classes {rwi}, outcome classes {roi}, "
          f"W/O {100.0 * rwi / roi:.2f}% -> {path}")
    if args.csv:
        export_features_csv(fs, args.phase, args.recall,
                            out / f"krwf_phase{args.phase}_k{args.recall}.csv")
    return 0


def _cmd_table3(args) -> int:
    from .experiments import export_table3
    from .features import get_features

    fs = get_features()
    t = fs.table3()
    print("phase:      1      2        2      3        3        3")
    print("recall:     0      0        1      0        1        2")
    print("LI:    ", "  ".join(f"{t['li'][p]:>6d}" for p in (1, 2, 2, 3, 3, 3)))
    print("k-RWI: ", "  ".join(f"{c['krwi']:>6d}" for c in t["cells"]))
    print("k-ROI: ", "  ".join(f"{c['kroi']:>6d}" for c in t["cells"]))
    print("W/O %: ", "  ".join(f"{c['wo_pct']:>6.2f}" for c in t["cells"]))
    if args.out:
        export_table3(fs, args.out)
        print(f"wrote {args.out}")
    return 0


def _cmd_emd(args) -> int:
    from .emd import DEFAULT_GROUND_DISTANCE, emd_exact, load_ground_matrix

    p = np.array([float(x) for x in args.p.split(",")])
    q = np.array([float(x) for x in args.q.split(",")])
    D = load_ground_matrix(args.matrix) if args.matrix else DEFAULT_GROUND_DISTANCE
    print(emd_exact(p, q, D))
    return 0


def _cmd_abstract(args) -> int:
    from .abstraction import build_ehs, build_krwemd, passthrough_map
    from .features import get_features

    fs = get_features()
    algo = args.algo.lower()
    if algo == "krwemd":
        weights = [float(w) for w in args.weights.split(",")]
        amap = build_krwemd(args.phase, args.recall, weights, args.buckets,
                            args.seed, fs)
    elif algo == "ehs":
        amap = build_ehs(args.phase, args.buckets, args.seed, fs)
    else:
        amap = passthrough_map(algo, args.phase, fs, k=args.recall)
    amap.save(args.out)
    print(f"{algo} phase {args.phase}: {amap.bucket_count(args.phase)} buckets "
          f"-> {args.out}")
    return 0


def _load_map(spec: str):
    from .abstraction import AbstractionMap
    from .experiments import li_full_map
    from .features import get_features

    if spec.lower() == "li":
        return li_full_map(get_features())
    return AbstractionMap.load(spec)


def _cmd_solve(args) -> int:
    from .cfr import Solver

    m1 = _load_map(args.abs1)
    m2 = _load_map(args.abs2)
    solver = Solver(m1, m2, seed=args.seed, batch_size=args.batch)
    done = 0
    k = 0
    while done < args.iters:
        step = args.iters - done
        if args.checkpoint_every > 0:
            step = min(step, args.checkpoint_every)
        solver.run(step)
        done += step
        if args.checkpoint_every > 0 and done < args.iters:
            k += 1
            path = f"{args.out}.ck{k:03d}"
            solver.save_checkpoint(path)
            print(f"checkpoint {done:,} iters -> {path}")
    solver.save_checkpoint(args.out)
    print(f"solved {done:,} iterations -> {args.out}")
    return 0


def _cmd_evaluate(args) -> int:
    import csv as csv_mod

    from .cfr import Solver, single_player_strategy
    from .evaluator import best_response_value
    from .betting import ANTE

    ck1 = Solver.load_checkpoint(args.strategy1)
    iteration = ck1.iterations_done
    s1 = single_player_strategy(ck1, 0)
    del ck1
    br1 = best_response_value(s1, responder=1)
    del s1
    s2 = single_player_strategy(Solver.load_checkpoint(args.strategy2), 1)
    br2 = best_response_value(s2, responder=0)
    del s2
    eps_chips = 0.5 * (br1 + br2)
    report = {
        "iteration": iteration,
        "br_value_vs_p1": br1,
        "br_value_vs_p2": br2,
        "epsilon_chips": eps_chips,
        "epsilon_mbg": eps_chips / ANTE * 1000.0,
        "strategy1": args.strategy1,
        "strategy2": args.strategy2,
        "timestamp": time.strftime("%Y-%m-%dT%H:%M:%S"),
    }
    print(json.dumps(report, indent=1, sort_keys=True))
    if args.csv:
        new = not os.path.exists(args.csv)
        with open(args.csv, "a", newline="") as f:
            w = csv_mod.writer(f)
            if new:
                w.writerow(["iteration", "epsilon_mbg", "strategy1", "strategy2"])
            w.writerow([iteration, report["epsilon_mbg"], args.strategy1, args.strategy2])
    return 0


def _cmd_experiment(args) -> int:
    from .experiments import ExperimentConfig, run_experiment

    config = ExperimentConfig.from_ini(args.config)
    rows = run_experiment(config)
    print(f"{len(rows)} curve rows -> {config.output_dir}/curves.csv")
    return 0


def _cmd_game(args) -> int:
    from .cards import parse_cards
    from .game import format_tree
    from .hands import evaluate_hand

    if args.tree:
        print(format_tree())
    if args.deal:
        p1, p2, board = (parse_cards(part) for part in args.deal.split("/"))
        r1 = evaluate_hand(p1 + board)
        r2 = evaluate_hand(p2 + board)
        verdict = "tie" if r1 == r2 else ("p1 wins" if r1 > r2 else "p2 wins")
        print(f"p1: {r1}  p2: {r2}  -> {verdict}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
