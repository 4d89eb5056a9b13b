"""Command-line pipeline: generate -> profile -> criticality -> partition ->
map -> simulate, plus compare and figdata convenience commands.

Stages communicate through JSON files so each one is independently runnable
and cacheable. Outputs are written atomically (temp file + rename). Report
commands additionally render a PNG figure next to the delimited output
unless --no-figures is given.

Exit codes: 0 success, 2 validation error, 3 infeasible input, 4 internal
error. Validation and infeasibility failures print a machine-readable JSON
object on stderr.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import math
import os
import sys

import numpy as np

from . import plots
from .circuit import (TECH_TABLE, calibrate_rcell, calibrate_reference_nodal,
                      corner_current_difference, nodal_environment,
                      path_resistance, series_cell_state, series_environment,
                      solve_nodal, voltage_map_stats)
from .config import RunConfig, load_config
from .disturb import lrs_transition_time, transition_time_for_level
from .errors import DriftmapError, InfeasibleError, ValidationError
from .mapper import cluster_mapping_from_dict, solve_cluster
from .model import generate_synthetic, load_dataset, load_model
from .partition import cluster_from_dict, partition_model, validate_clusters
from .profiler import (classify_criticality, criticality_from_dict,
                       effective_eta, profile_from_dict, profile_spikes)
from .simulate import (Mapping, ReprogramPolicy, compare_modes,
                       run_simulation)

SEED_ENV_VAR = "RRAM_DRIFT_SEED"


# -- plumbing -----------------------------------------------------------------

def _atomic_write(path: str, data: str):
    tmp = f"{path}.tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        fh.write(data)
    os.replace(tmp, path)


def _emit_json(doc, path: str):
    _atomic_write(path, json.dumps(doc, indent=2) + "\n")


def _emit_csv(header: str, rows, path: str):
    lines = [header]
    lines.extend(",".join(str(v) for v in row) for row in rows)
    _atomic_write(path, "\n".join(lines) + "\n")


def _read_json(path: str, what: str):
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return json.load(fh)
    except OSError as exc:
        raise ValidationError(f"cannot read {what} file: {exc}")
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{what} file does not parse as JSON: {exc}")


def _stem(path: str) -> str:
    root, _ = os.path.splitext(path)
    return root


def _resolve_seed(flag_seed, config: RunConfig) -> int:
    if flag_seed is not None:
        return flag_seed
    if config.seed is not None:
        return config.seed
    env = os.environ.get(SEED_ENV_VAR)
    if env is not None:
        try:
            return int(env)
        except ValueError:
            raise ValidationError(
                f"{SEED_ENV_VAR} must be an integer, got {env!r}")
    return 0


def _environment(config: RunConfig, n: int | None = None):
    crossbar = config.crossbar(n)
    if config.circuit_mode == "nodal":
        return nodal_environment(crossbar)
    return series_environment(crossbar)


def _load_mapping(path: str) -> Mapping:
    doc = _read_json(path, "mapping")
    try:
        clusters = tuple(cluster_mapping_from_dict(c)
                         for c in doc["clusters"])
        return Mapping(clusters=clusters,
                       trpi_inferences=float(doc["tRPI_inferences"]))
    except (KeyError, TypeError, ValueError) as exc:
        raise ValidationError(f"bad mapping file: {exc}")


# -- commands -----------------------------------------------------------------

def cmd_generate(args) -> int:
    config = load_config(args.config)
    seed = _resolve_seed(args.seed, config)
    layers = [int(v) for v in args.layers.split(",") if v.strip()]
    model, dataset = generate_synthetic(
        layers, num_classes=args.num_classes, seed=seed,
        num_samples=args.samples, max_count=args.max_count)
    _emit_json(model.to_dict(), args.out_model)
    _emit_json(dataset.to_dict(), args.out_dataset)
    print(f"wrote {args.out_model} ({model.num_neurons} neurons, "
          f"{model.num_synapses} synapses) and {args.out_dataset} "
          f"({len(dataset)} samples)")
    return 0


def cmd_profile(args) -> int:
    model = load_model(args.model)
    dataset = load_dataset(args.dataset, model)
    profile = profile_spikes(model, dataset)
    _emit_json(profile.to_dict(), args.out)
    if not args.no_figures:
        plots.spike_histogram_figure(profile.histogram,
                                     _stem(args.out) + ".png")
    print(f"wrote {args.out}: {profile.num_synapses} synapses over "
          f"{profile.num_images} images, avg spikes/image "
          f"{profile.avg_spikes_per_image:.4f}")
    return 0


def cmd_criticality(args) -> int:
    model = load_model(args.model)
    dataset = load_dataset(args.dataset, model)
    report = classify_criticality(model, dataset, threshold=args.threshold,
                                  jobs=args.jobs)
    _emit_json(report.to_dict(), args.out)
    frac = float(np.mean(report.critical))
    print(f"wrote {args.out}: {frac:.1%} of synapses critical at "
          f"threshold {args.threshold}")
    return 0


def cmd_partition(args) -> int:
    config = load_config(args.config)
    seed = _resolve_seed(args.seed, config)
    model = load_model(args.model)
    profile = profile_from_dict(_read_json(args.profile, "profile"))
    clusters = partition_model(model, profile, args.crossbar_n, seed)
    validate_clusters(model, clusters, args.crossbar_n)
    doc = {
        "crossbar_N": args.crossbar_n,
        "clusters": [c.to_dict() for c in clusters],
    }
    _emit_json(doc, args.out)
    total_cut = sum(c.cut_spikes for c in clusters)
    print(f"wrote {args.out}: {len(clusters)} clusters, "
          f"cut spikes/inference {total_cut:.4f}")
    return 0


def cmd_map(args) -> int:
    config = load_config(args.config)
    seed = _resolve_seed(args.seed, config)
    doc = _read_json(args.clusters, "clusters")
    try:
        crossbar_n = int(doc["crossbar_N"])
        clusters = [cluster_from_dict(c) for c in doc["clusters"]]
    except (KeyError, TypeError, ValueError) as exc:
        raise ValidationError(f"bad clusters file: {exc}")
    profile = profile_from_dict(_read_json(args.profile, "profile"))
    eta_raw = profile.per_synapse_eta
    if args.mode == "proposed":
        if args.criticality is None:
            raise ValidationError("--mode proposed needs --criticality")
        crit = criticality_from_dict(_read_json(args.criticality,
                                                "criticality"))
        eta_eff = effective_eta(profile, crit, config.epsilon)
    env = _environment(config, crossbar_n)
    params = config.disturb_params()

    mapped = []
    for cluster in clusters:
        if args.mode == "proposed":
            warm = solve_cluster(cluster, eta_raw, env, params, "endurer",
                                 seed=seed, budget=config.move_budget)
            warm_rows = tuple(warm.rows[nid] for nid in cluster.pre_neurons)
            warm_cols = tuple(warm.cols[nid] for nid in cluster.post_neurons)
            cm = solve_cluster(cluster, eta_eff, env, params, "proposed",
                               seed=seed, budget=config.move_budget,
                               extra_candidates=((warm_rows, warm_cols),))
        else:
            cm = solve_cluster(cluster, eta_raw, env, params, args.mode,
                               seed=seed, exact_cap=config.exact_cap,
                               budget=config.move_budget)
        mapped.append(cm)
    trpi = min(cm.tau_inferences for cm in mapped)
    out_doc = {
        "clusters": [cm.to_dict() for cm in mapped],
        "tRPI_inferences": trpi,
    }
    _emit_json(out_doc, args.out)
    print(f"wrote {args.out}: mode {args.mode}, tRPI {trpi:.4f} inferences")
    return 0


def _parse_policy(text: str, mapping: Mapping) -> ReprogramPolicy:
    if text == "never":
        return ReprogramPolicy(kind="never")
    if text == "auto":
        every = max(1, math.floor(mapping.trpi_inferences))
        return ReprogramPolicy(kind="every", every=every)
    if text.startswith("every="):
        try:
            return ReprogramPolicy(kind="every", every=int(text[6:]))
        except ValueError:
            raise ValidationError(f"bad policy interval in {text!r}")
    raise ValidationError(
        f"policy must be auto, never or every=K, got {text!r}")


def cmd_simulate(args) -> int:
    config = load_config(args.config)
    seed = _resolve_seed(args.seed, config)
    model = load_model(args.model)
    dataset = load_dataset(args.dataset, model)
    mapping = _load_mapping(args.mapping)
    max_port = max((max(list(cm.rows.values()) + list(cm.cols.values()))
                    for cm in mapping.clusters), default=0)
    env = _environment(config, max(config.crossbar_n, max_port + 1))
    policy = _parse_policy(args.policy, mapping)
    report = run_simulation(
        model, dataset, mapping, env, config.disturb_params(), policy,
        stream_length=args.length, seed=seed, cost_model=config.cost,
        inference_period=config.inference_period,
        window=config.accuracy_window,
        stress_accounting=config.stress_accounting)
    _emit_json(report.to_dict(), args.out)
    _emit_csv("inference_index,window_accuracy,drift_events_cum,"
              "reprogram_events_cum",
              report.timeline_csv_rows(), _stem(args.out) + ".csv")
    if not args.no_figures:
        plots.timeline_figure(report, _stem(args.out) + ".png")
    print(f"wrote {args.out}: final accuracy {report.final_accuracy:.3f} "
          f"(baseline {report.baseline_accuracy:.3f}), "
          f"{report.drift_events} drift events, "
          f"{report.reprogram_events} reprograms, "
          f"overhead {report.overhead:.3e}")
    return 0


def cmd_compare(args) -> int:
    config = load_config(args.config)
    seed = _resolve_seed(args.seed, config)
    model = load_model(args.model)
    dataset = load_dataset(args.dataset, model)
    env = _environment(config)
    result = compare_modes(
        model, dataset, env, config.disturb_params(), seed=seed,
        epsilon=config.epsilon, threshold=config.criticality_threshold,
        cost_model=config.cost, stream_length=args.length,
        inference_period=config.inference_period,
        window=config.accuracy_window, budget=config.move_budget,
        stress_accounting=config.stress_accounting)
    rows = result["rows"]
    _emit_csv("mode,tRPI,tRPT,overhead,final_accuracy",
              [(r["mode"], r["tRPI"], r["tRPT"], r["overhead"],
                r["final_accuracy"]) for r in rows],
              args.out)
    summary = {
        "seed": seed,
        "stream_length": result["stream_length"],
        "rows": rows,
        "overhead_reduction": result.get("overhead_reduction"),
    }
    _emit_json(summary, _stem(args.out) + ".json")
    if not args.no_figures:
        plots.comparison_figure(rows, _stem(args.out) + ".png")
    for r in rows:
        print(f"{r['mode']:>9}: tRPI {r['tRPI']:.4f}  overhead "
              f"{r['overhead']:.3e}  accuracy {r['final_accuracy']:.3f}")
    if result.get("overhead_reduction") is not None:
        print(f"overhead reduction (proposed vs endurer): "
              f"{result['overhead_reduction']:.1%}")
    return 0


FIG4_SIZES = (32, 64, 128, 256)
FIG4_ANCHOR = (128, 0.392)


def cmd_figdata(args) -> int:
    config = load_config(args.config)
    if args.which == "fig4":
        crossbar = config.crossbar(FIG4_ANCHOR[0])
        r_cell = calibrate_rcell(crossbar, FIG4_ANCHOR[1], FIG4_ANCHOR[0])
        rows = []
        for n in FIG4_SIZES:
            sized = config.crossbar(n)
            near = series_cell_state(0, 0, sized, r_cell).current
            far = series_cell_state(n - 1, n - 1, sized, r_cell).current
            rows.append({"n": n, "current_short": near, "current_long": far,
                         "diff_fraction": corner_current_difference(
                             sized, n, r_cell)})
        _emit_csv("n,current_short,current_long,diff_fraction",
                  [(r["n"], f"{r['current_short']:.9e}",
                    f"{r['current_long']:.9e}",
                    f"{r['diff_fraction']:.6f}") for r in rows],
                  args.out)
        if not args.no_figures:
            plots.corner_difference_figure(rows, _stem(args.out) + ".png")
        print(f"wrote {args.out}: calibrated cell resistance "
              f"{r_cell:.1f} ohm")
        return 0

    if args.which == "fig5":
        ref = calibrate_reference_nodal(config.tech, n=config.crossbar_n)
        env = solve_nodal(ref, np.full((ref.n, ref.n),
                                       ref.r_cell_by_level[0]))
        stats = voltage_map_stats(env)
        _emit_csv("i,j,voltage,current",
                  [(i, j, f"{v:.9e}", f"{c:.9e}")
                   for i, j, v, c in stats["grid"]],
                  args.out)
        params = config.disturb_params()
        tmap = np.empty_like(env.stress_voltage)
        cache = {}
        for (i, j), v in np.ndenumerate(env.stress_voltage):
            if v not in cache:
                cache[v] = transition_time_for_level(0, float(v), params)
            tmap[i, j] = cache[v]
        _emit_csv("i,j,transition_time_s",
                  [(i, j, f"{tmap[i, j]:.9e}")
                   for i in range(env.n) for j in range(env.n)],
                  _stem(args.out) + "_transition.csv")
        if not args.no_figures:
            plots.heatmap_figure(env.stress_voltage, "stress voltage (V)",
                                 _stem(args.out) + "_voltage.png")
            plots.heatmap_figure(tmap, "transition time (s)",
                                 _stem(args.out) + "_transition.png")
        print(f"wrote {args.out}: v in [{stats['v_min']:.4f}, "
              f"{stats['v_max']:.4f}] V, transition time in "
              f"[{tmap.min():.3f}, {tmap.max():.3f}] s")
        return 0

    # fig8: minimum transition time per state across technology nodes.
    # The drive is anchored to a fixed read current through the longest
    # path, so scaled nodes (larger parasitics) raise the cell voltage and
    # shorten transition times; both states are evaluated at the voltage of
    # the hottest cell under the high-resistance read divider.
    rows = []
    params = config.disturb_params()
    r_hrs = config.r_cell_levels[0]
    for name in ("65nm", "16nm", "5nm"):
        tech = TECH_TABLE[name]
        sized = config.crossbar()
        n = sized.n
        sized = dataclasses.replace(sized, tech=tech, v_drive=1.0)
        r_long = path_resistance(n - 1, n - 1, sized)
        v_drive = config.read_current * (r_hrs + r_long)
        sized = dataclasses.replace(sized, v_drive=v_drive)
        v_hot = series_cell_state(0, 0, sized, r_hrs).stress_voltage
        rows.append({"tech": name, "state": "HRS", "v_max": v_hot,
                     "min_transition_time_s":
                         transition_time_for_level(0, v_hot, params)})
        rows.append({"tech": name, "state": "LRS", "v_max": v_hot,
                     "min_transition_time_s": lrs_transition_time(v_hot)})
    _emit_csv("tech,state,v_max,min_transition_time_s",
              [(r["tech"], r["state"], f"{r['v_max']:.6f}",
                f"{r['min_transition_time_s']:.9e}") for r in rows],
              args.out)
    if not args.no_figures:
        plots.state_dependence_figure(rows, _stem(args.out) + ".png")
    print(f"wrote {args.out}")
    return 0


# -- argument parsing -----------------------------------------------------------

def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="driftmap",
        description="Read-disturb-aware mapping of spiking networks onto "
                    "OxRRAM crossbars")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config=True, seed=True, figures=False, jobs=False):
        if config:
            p.add_argument("--config", default=None,
                           help="run configuration JSON")
        if seed:
            p.add_argument("--seed", type=int, default=None,
                           help=f"seed (fallback: config, then "
                                f"${SEED_ENV_VAR})")
        if figures:
            p.add_argument("--no-figures", action="store_true",
                           help="skip PNG rendering")
        if jobs:
            p.add_argument("--jobs", type=int, default=1,
                           help="worker process cap")

    p = sub.add_parser("generate", help="synthetic model + dataset files")
    p.add_argument("--layers", required=True,
                   help="comma-separated layer sizes, e.g. 4,8,2")
    p.add_argument("--num-classes", type=int, default=None)
    p.add_argument("--samples", type=int, default=64)
    p.add_argument("--max-count", type=int, default=10)
    p.add_argument("--out-model", required=True)
    p.add_argument("--out-dataset", required=True)
    common(p)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("profile", help="per-synapse spike statistics")
    p.add_argument("--model", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True)
    common(p, seed=False, figures=True)
    p.set_defaults(func=cmd_profile)

    p = sub.add_parser("criticality", help="perturbation sweep")
    p.add_argument("--model", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--threshold", type=float, default=0.01)
    p.add_argument("--out", required=True)
    common(p, seed=False, jobs=True)
    p.set_defaults(func=cmd_criticality)

    p = sub.add_parser("partition", help="cluster the model into crossbars")
    p.add_argument("--model", required=True)
    p.add_argument("--profile", required=True)
    p.add_argument("--crossbar-n", type=int, default=128)
    p.add_argument("--out", required=True)
    common(p)
    p.set_defaults(func=cmd_partition)

    p = sub.add_parser("map", help="solve synapse-to-cell assignment")
    p.add_argument("--clusters", required=True)
    p.add_argument("--profile", required=True)
    p.add_argument("--criticality", default=None)
    p.add_argument("--mode", required=True,
                   choices=("proposed", "endurer", "random", "exact"))
    p.add_argument("--out", required=True)
    common(p)
    p.set_defaults(func=cmd_map)

    p = sub.add_parser("simulate", help="stream inferences with drift")
    p.add_argument("--mapping", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--policy", default="auto",
                   help="auto | never | every=K")
    p.add_argument("--length", type=int, required=True)
    p.add_argument("--out", required=True)
    common(p, figures=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("compare", help="random vs endurer vs proposed")
    p.add_argument("--model", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--length", type=int, default=None)
    p.add_argument("--out", required=True)
    common(p, figures=True)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("figdata", help="reference sweep datasets")
    p.add_argument("--which", required=True,
                   choices=("fig4", "fig5", "fig8"))
    p.add_argument("--out", required=True)
    common(p, seed=False, figures=True)
    p.set_defaults(func=cmd_figdata)

    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ValidationError as exc:
        json.dump({"error": "validation", "message": str(exc),
                   "field": exc.field}, sys.stderr)
        sys.stderr.write("\n")
        return 2
    except InfeasibleError as exc:
        json.dump({"error": "infeasible", "message": str(exc)}, sys.stderr)
        sys.stderr.write("\n")
        return 3
    except DriftmapError as exc:
        json.dump({"error": "internal", "message": str(exc)}, sys.stderr)
        sys.stderr.write("\n")
        return 4
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        json.dump({"error": "internal",
                   "message": f"{type(exc).__name__}: {exc}"}, sys.stderr)
        sys.stderr.write("\n")
        return 4


if __name__ == "__main__":
    sys.exit(main())
