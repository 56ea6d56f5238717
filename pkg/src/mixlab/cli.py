"""``mixlab`` command line: data generation, EM, mean-field VB and VAE drivers.

Exit codes: 0 success, 1 usage or input error, 2 numerical failure.
"""

import argparse
import os
import sys

import numpy as np

from . import config as cfg
from .errors import InvalidArgument, IoError, MixlabError, NumericalError
from .files import fmt, read_data_csv, read_mixture_json, write_data_csv, write_mixture_json, write_rows
from .mixture import MixtureParams, StoppingRule, fit_em, generate_gmm_data, init_grid
from .report import ResultReport, comparison_text
from .svg import em_svg
from .vae import VaeConfig, evaluate_bound, save_checkpoint, train_vae
from .variational import init_mean_field, mean_field_fit, quadratic_model

MAX_K_HAT = 16


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _write_text(path, text):
    try:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc.strerror}") from None


def _out(conf, name):
    return os.path.join(conf["out"], name)


def cmd_gen_data(conf):
    theta = MixtureParams.from_arrays(conf["weights"], conf["means"], conf["covs"])
    X, z = generate_gmm_data(theta, conf["n"], conf["seed"])
    write_data_csv(_out(conf, "data.csv"), X, z)
    write_mixture_json(_out(conf, "truth.json"), theta)
    counts = np.bincount(z, minlength=theta.k)
    lines = [f"wrote {len(X)} samples to {_out(conf, 'data.csv')}"]
    lines += [f"component {k + 1}: {int(c)}" for k, c in enumerate(counts)]
    return "\n".join(lines)


def cmd_fit_em(conf):
    k_hat = conf["k_hat"]
    if not 1 <= k_hat <= MAX_K_HAT:
        raise InvalidArgument(f"k_hat must be in [1, {MAX_K_HAT}], got {k_hat}")
    X, _ = read_data_csv(conf["data"])
    init = init_grid(X, k_hat, conf["seed"])
    trace = fit_em(X, init, StoppingRule(conf["max_passes"], conf["loglik_tol"]))
    report = ResultReport.from_trace(trace)
    _write_text(_out(conf, "report.txt"), report.to_text())
    write_mixture_json(_out(conf, "params.json"), trace.final.params)
    header = ["pass", "loglik"]
    for k in range(k_hat):
        header += [f"w{k + 1}", f"mx{k + 1}", f"my{k + 1}", f"pxx{k + 1}", f"pxy{k + 1}", f"pyy{k + 1}"]
    rows = []
    for step in trace.passes:
        row = [step.index, fmt(step.loglik)]
        for w, c in zip(step.params.weights, step.params.components):
            row += [fmt(w), fmt(c.mean[0]), fmt(c.mean[1]), fmt(c.cov[0, 0]), fmt(c.cov[0, 1]), fmt(c.cov[1, 1])]
        rows.append(row)
    write_rows(_out(conf, "trace.csv"), header, rows)
    _write_text(_out(conf, "ellipses.svg"), em_svg(X, trace, conf["ellipse_points"]))
    return report.to_text().rstrip("\n")


def cmd_fit_vb(conf):
    model = quadratic_model(conf["precision"], conf["linear"])
    state = mean_field_fit(model, init_mean_field(model), conf["max_sweeps"], conf["tol"])
    rows = [[j + 1, fmt(f.mean[0]), fmt(f.cov[0, 0])] for j, f in enumerate(state.factors)]
    write_rows(_out(conf, "factors.csv"), ["block", "mean", "variance"], rows)
    write_rows(_out(conf, "vlb_trace.csv"), ["sweep", "vlb"],
               [[i, fmt(v)] for i, v in enumerate(state.vlb_trace)])
    lines = [f"sweeps: {state.n_sweeps}", f"converged: {state.converged}",
             f"final bound: {fmt(state.vlb_trace[-1])}", f"log evidence: {fmt(model.exact_log_evidence)}"]
    lines += [f"factor {r[0]}: mean {r[1]} variance {r[2]}" for r in rows]
    return "\n".join(lines)


def cmd_train_vae(conf):
    X, _ = read_data_csv(conf["data"])
    if conf["estimator"] not in ("A", "B"):
        raise InvalidArgument(f"estimator must be A or B, got {conf['estimator']!r}")
    vc = VaeConfig(
        n_x=X.shape[1], n_z=conf["n_z"], hidden=conf["hidden"], L=conf["L"],
        batch_size=conf["batch_size"], learning_rate=conf["learning_rate"], epochs=conf["epochs"],
        seed=conf["seed"], decoder_logvar=conf["decoder_logvar"],
    )
    result = train_vae(X, vc, conf["estimator"])
    save_checkpoint(_out(conf, "checkpoint.txt"), result.phi, result.theta)
    write_rows(_out(conf, "trace.csv"), ["epoch", "bound"], [[e + 1, fmt(v)] for e, v in enumerate(result.trace)])
    est = evaluate_bound(X, result.phi, result.theta, conf["eval_samples"], conf["seed"], "B")
    return f"final bound per point (L={conf['eval_samples']}): {fmt(est.value)} +/- {fmt(est.std_error)}"


def cmd_report(conf):
    estimated = read_mixture_json(conf["estimated"])
    truth = read_mixture_json(conf["truth"])
    text = comparison_text(estimated, truth)
    _write_text(_out(conf, "comparison.txt"), text)
    return text.rstrip("\n")


COMMANDS = {
    "gen-data": cmd_gen_data,
    "fit-em": cmd_fit_em,
    "fit-vb": cmd_fit_vb,
    "train-vae": cmd_train_vae,
    "report": cmd_report,
}


def build_parser():
    parser = _Parser(prog="mixlab", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name in COMMANDS:
        p = sub.add_parser(name, formatter_class=argparse.RawDescriptionHelpFormatter,
                           epilog="config keys:\n" + cfg.describe(name))
        p.add_argument("--config", help="flat key = value file")
        p.add_argument("--seed", type=int)
        p.add_argument("--out", help="output directory")
        if name == "fit-em":
            p.add_argument("--k-hat", type=int, dest="k_hat")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override one config key (repeatable)")
    return parser


def load_config(args):
    raw = cfg.read_config_file(args.config) if args.config else {}
    for item in args.set:
        if "=" not in item:
            raise InvalidArgument(f"--set expects KEY=VALUE, got {item!r}")
        key, value = item.split("=", 1)
        raw[key.strip()] = value.strip()
    for name in ("seed", "out", "k_hat"):
        value = getattr(args, name, None)
        if value is not None:
            raw[name] = str(value)
    conf = cfg.resolve(args.command, raw)
    if not os.path.isdir(conf["out"]):
        try:
            os.makedirs(conf["out"])
        except OSError as exc:
            raise IoError(f"cannot create output directory {conf['out']}: {exc.strerror}") from None
    return conf


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
        conf = load_config(args)
        print(COMMANDS[args.command](conf))
    except UsageError as exc:
        print(f"mixlab: {exc}", file=sys.stderr)
        return 1
    except NumericalError as exc:
        print(f"mixlab: numerical failure: {exc}", file=sys.stderr)
        return 2
    except MixlabError as exc:
        print(f"mixlab: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
