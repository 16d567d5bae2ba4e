"""Command line: simulate | features | fit | evaluate.

Options can also come from an INI file given with ``--config``: keys of the
section named after the subcommand (and of ``[prior]`` for ``fit``) are
option names with dashes or underscores; command-line flags win.
"""

from __future__ import annotations

import argparse
import configparser
import hashlib
import json
import logging
import os
import platform
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import __version__
from .base import BasePrior
from .baselines import run_dp_chain, run_ndp_chain
from .data import (DatasetError, HierDataset, Patient, Seizure, desk_hierarchy_config,
                   load_dataset, save_dataset, simulate_hierarchy, simulate_table1)
from .evaluation import (ASSIGN_MODES, dp_heldout_assign, kl_divergence, kl_grid,
                         log_perplexity, metric_rows, mlchdp_heldout_assign, posterior_density,
                         rand_c, write_metrics)
from .experiments import PREFIX_MODELS, growing_prefix, true_density
from .features import (BandSpec, TAPER, apply_pca, fit_pca, read_signal, record_features)
from .samples import MODELS, read_samples, write_samples
from .sampler import ChainConfig, Priors, run_chain

log = logging.getLogger("mlchdp")

THREADS_ENV = "MLCHDP_THREADS"


class UsageError(Exception):
    pass


def sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def truth_path(dataset_path) -> Path:
    p = Path(dataset_path)
    return p.with_name(p.stem + ".truth.json")


def _positive(kind):
    def parse(text):
        v = kind(text)
        if v < 1:
            raise argparse.ArgumentTypeError(f"must be >= 1, got {text}")
        return v
    return parse


def _nonneg_int(text):
    v = int(text)
    if v < 0:
        raise argparse.ArgumentTypeError(f"must be >= 0, got {text}")
    return v


def _floats(text):
    return [float(t) for t in str(text).split(",") if t.strip()]


def _bands(text):
    out = []
    for part in str(text).split(","):
        lo, hi = part.split("-")
        out.append((float(lo), float(hi)))
    return tuple(out)


# -- simulate -------------------------------------------------------------------

def cmd_simulate(args) -> int:
    out = Path(args.out)
    if args.kind == "table1":
        ds, labels = simulate_table1(args.samples_per_dist, args.obs_per_sample, args.seed)
        truth = {"kind": "table1", "labels": labels}
    else:
        ds, tr = simulate_hierarchy(desk_hierarchy_config(), args.seed)
        truth = {"kind": "hierarchy",
                 "patient_types": tr.patient_types.tolist(),
                 "seizure_types": [s.tolist() for s in tr.seizure_types],
                 "channel_atoms": [[a.tolist() for a in p] for p in tr.channel_atoms]}
    save_dataset(ds, out)
    truth_path(out).write_text(json.dumps(truth))
    print(f"wrote {out} ({ds.n_patients} patients, {ds.n_seizures} seizures, "
          f"{ds.n_obs} observations) and {truth_path(out)}")
    return 0


# -- features -------------------------------------------------------------------

def _signal_files(root: Path):
    """[(patient id, [sidecar paths])]: subdirectories are patients; sidecars
    directly under ``root`` form one patient named after it."""
    groups = []
    top = sorted(p for p in root.glob("*.json"))
    if top:
        groups.append((root.name, top))
    for sub in sorted(p for p in root.iterdir() if p.is_dir()):
        files = sorted(sub.glob("*.json"))
        if files:
            groups.append((sub.name, files))
    return groups


def cmd_features(args) -> int:
    root = Path(args.input_dir)
    if not root.is_dir():
        raise UsageError(f"input directory {root} not found")
    spec = BandSpec(_bands(args.bands), args.window, args.overlap)
    groups = _signal_files(root)
    if not groups:
        raise UsageError(f"no signal sidecars under {root}")
    feats = []
    for pid, files in groups:
        for f in files:
            rec = read_signal(f)
            feats.append((pid, f.stem, record_features(rec, spec)))
    X = np.concatenate([F for _, _, F in feats], axis=0)
    meta = {"taper": TAPER, "detrend": False, "bands": spec.bands, "window": spec.window,
            "overlap": spec.overlap, "raw_dim": int(X.shape[1])}
    if args.pca_dim:
        pca = fit_pca(X, args.pca_dim)
        meta["pca"] = pca.to_dict()
        meta["explained"] = pca.explained.tolist()
        transform = lambda F: apply_pca(pca, F)  # noqa: E731
    else:
        transform = lambda F: F  # noqa: E731
    patients: dict[str, list] = {}
    for pid, sid, F in feats:
        patients.setdefault(pid, []).append(Seizure(sid, transform(F)))
    ds = HierDataset([Patient(p, s) for p, s in patients.items()],
                     int(transform(feats[0][2]).shape[1]))
    out = Path(args.out)
    save_dataset(ds, out)
    out.with_name(out.stem + ".features.json").write_text(json.dumps(meta))
    print(f"wrote {out}: {ds.n_seizures} seizures, {ds.n_obs} channels, d={ds.d}")
    return 0


# -- fit ------------------------------------------------------------------------

def _priors(args, X) -> Priors:
    base = None
    if args.sigma0_sq is not None or args.kappa0 is not None or args.mu0 is not None \
            or args.nu0 is not None:
        d = X.shape[1]
        mu0 = np.asarray(_floats(args.mu0)) if args.mu0 is not None else X.mean(axis=0)
        s0 = np.asarray(_floats(args.sigma0_sq)) if args.sigma0_sq is not None \
            else X.var(axis=0)
        base = BasePrior(args.kappa0 or 1.0, mu0, args.nu0 or 3.0, s0).broadcast(d)
    return Priors(base=base, alpha=tuple(args.alpha), gamma=tuple(args.gamma),
                  hyper_a=args.hyper_a, hyper_b=args.hyper_b)


def chain_seeds(seed: int, chains: int) -> list[int]:
    return [int(s.generate_state(1)[0]) for s in np.random.SeedSequence(seed).spawn(chains)]


def _fit_one(args, ds: HierDataset, priors: Priors, seed: int):
    cfg = ChainConfig(burn_in=args.burnin, thin=args.thin, n_samples=args.n_samples, seed=seed,
                      levels_enabled=args.levels, hyper_sampling=not args.fixed_hypers,
                      rao_blackwell=not args.explicit_params, random_scan=args.random_scan)
    hyper = (args.hyper_a, args.hyper_b)
    if args.model == "mlchdp":
        return run_chain(ds, priors, cfg)
    if args.model == "dp":
        X = ds.flatten()[0]
        return run_dp_chain(X, priors.base, priors.alpha[2], cfg, hyper)
    groups = [s.observations for s in ds.seizures()]
    return run_ndp_chain(groups, args.ndp_top, args.ndp_bottom, priors.base, cfg, hyper)


def _threads(args) -> int:
    if args.threads:
        return args.threads
    env = os.environ.get(THREADS_ENV)
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise UsageError(f"{THREADS_ENV} must be an integer, got {env!r}") from None
    return 1


def cmd_fit(args) -> int:
    data = Path(args.data)
    if not data.is_file():
        raise UsageError(f"dataset {data} not found")
    ds = load_dataset(data)
    priors = _priors(args, ds.flatten()[0])
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    seeds = chain_seeds(args.seed, args.chains)
    t0 = time.perf_counter()
    timing = [0.0] * args.chains

    def job(c):
        t = time.perf_counter()
        samples = _fit_one(args, ds, priors, seeds[c])
        timing[c] = time.perf_counter() - t
        return samples

    with ThreadPoolExecutor(max_workers=_threads(args)) as pool:
        results = list(pool.map(job, range(args.chains)))
    files = {}
    for c, samples in enumerate(results):
        path = out / f"chain_{c:03d}.jsonl"
        write_samples(path, samples)
        files[path.name] = sha256(path)
    manifest = {
        "command": "fit",
        "config": {k: v for k, v in vars(args).items() if k != "func"},
        "priors": {"base": priors.base.to_dict() if priors.base is not None else "default",
                   **{k: v for k, v in asdict(priors).items() if k != "base"}},
        "seeds": seeds,
        "version": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "inputs": {str(data): sha256(data)},
        "outputs": files,
        "timing": {"total_s": time.perf_counter() - t0, "per_chain_s": timing},
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, default=str))
    print(f"wrote {len(results)} chains x {args.n_samples} samples to {out}")
    return 0


# -- evaluate ---------------------------------------------------------------------

def _chain_files(paths) -> list[Path]:
    files = []
    for p in map(Path, paths):
        if p.is_dir():
            files.extend(sorted(p.glob("chain_*.jsonl")))
        elif p.is_file():
            files.append(p)
        else:
            raise UsageError(f"sample path {p} not found")
    if not files:
        raise UsageError("no sample files found")
    return files


def _load_truth(path):
    if path is None:
        raise UsageError("this metric needs --truth")
    p = Path(path)
    if not p.is_file():
        raise UsageError(f"truth file {p} not found")
    return json.loads(p.read_text())


def _by_model(chains) -> dict:
    """Chains grouped by their model tag, in first-seen order."""
    out = {}
    for c in chains:
        out.setdefault(c[0].model, []).append(c)
    return out


def _eval_kl(args, chains):
    truth = _load_truth(args.truth)
    if truth.get("kind") != "table1":
        raise UsageError("kl needs a table1 truth file (per-group distribution labels)")
    labels = truth["labels"]
    grid = kl_grid()
    rows, curves = [], []
    for model, model_chains in _by_model(chains).items():
        for name in sorted(set(labels)):
            td = true_density(name, grid)
            per_chain = []
            for c, samples in enumerate(model_chains):
                vals = []
                for g, lab in enumerate(labels):
                    if lab != name:
                        continue
                    est = posterior_density(samples, grid, g)
                    vals.append(kl_divergence(td, est))
                    curves.append((model, name, c, g, est.pdf))
                per_chain.append(float(np.mean(vals)))
            rows += metric_rows("kl", model, name, per_chain)
    if args.density_out:
        with open(args.density_out, "w") as fh:
            fh.write("model,dist,chain,group,x,true,est\n")
            for model, name, c, g, pdf in curves:
                td = true_density(name, grid).pdf
                for x, t, e in zip(grid, td, pdf):
                    fh.write(f"{model},{name},{c},{g},{x!r},{t!r},{e!r}\n")
    return rows


def _reference_labels(truth, level):
    if truth.get("kind") == "table1":
        if level != "top":
            raise UsageError("table1 truth only labels groups (--level top)")
        return np.unique(truth["labels"], return_inverse=True)[1]
    if level == "top":
        return np.concatenate([np.asarray(s) for s in truth["seizure_types"]])
    if level == "base":
        return np.concatenate([np.asarray(a) for p in truth["channel_atoms"] for a in p])
    return np.asarray(truth["patient_types"])


def _eval_rand_c(args, chains):
    if args.labels is not None:
        if args.reference is None:
            raise UsageError("--labels needs --reference")
        a = json.loads(Path(args.labels).read_text())
        b = json.loads(Path(args.reference).read_text())
        return metric_rows("rand_c", "labels", Path(args.labels).stem, [rand_c(a, b)])
    ref = _reference_labels(_load_truth(args.truth), args.level)
    rows = []
    for model, model_chains in _by_model(chains).items():
        per_chain = []
        for samples in model_chains:
            vals = []
            for s in samples:
                if args.level == "top":
                    lab = s.group_labels()
                elif args.level == "base":
                    lab = s.obs_labels()
                else:
                    lab = np.asarray(s.z1)
                vals.append(rand_c(lab, ref))
            per_chain.append(float(np.mean(vals)))
        rows += metric_rows("rand_c", model, args.level, per_chain)
    return rows


def _fit_config(args, seed):
    return ChainConfig(burn_in=args.burnin, thin=args.thin, n_samples=args.n_samples, seed=seed,
                       hyper_sampling=not args.fixed_hypers)


def _eval_perplexity(args, chains):
    if args.data is None:
        raise UsageError("perplexity needs --data")
    ds = load_dataset(args.data)
    if not 0 <= args.patient < ds.n_patients:
        raise UsageError(f"--patient must be in 0..{ds.n_patients - 1}")
    if args.growing_prefix:
        priors = _priors(args, ds.flatten()[0])
        J = len(ds.patients[args.patient].seizures)
        if J < 2:
            raise UsageError("growing prefix needs a patient with >= 2 seizures")
        per_chain = [growing_prefix(ds, args.patient, _fit_config(args, s), priors,
                                    assign=args.assign)
                     for s in chain_seeds(args.seed, args.chains)]
        rows = []
        for m in PREFIX_MODELS:
            for j in range(1, J):
                rows += metric_rows("log_perplexity", m, f"prefix={j}",
                                    [r[m][j - 1] for r in per_chain])
        return rows
    if chains is None:
        raise UsageError("perplexity needs --samples or --growing-prefix")
    xs = [s.observations for s in ds.patients[args.patient].seizures]
    rows = []
    for model, model_chains in _by_model(chains).items():
        if model not in ("dp", "mlchdp"):
            raise UsageError("perplexity is defined for dp and mlchdp samples")
        per_chain = []
        for samples in model_chains:
            if model == "dp":
                assign = [dp_heldout_assign(s, xs, args.assign) for s in samples]
            else:
                assign = [mlchdp_heldout_assign(s, xs, args.patient, args.assign) for s in samples]
            per_chain.append(float(np.mean([log_perplexity(xs, a, s.mu, s.sigma2)
                                            for s, a in zip(samples, assign)])))
        rows += metric_rows("log_perplexity", model, Path(args.data).stem, per_chain)
    return rows


def cmd_evaluate(args) -> int:
    chains = None
    if args.samples:
        chains = [read_samples(f) for f in _chain_files(args.samples)]
        if any(not c for c in chains):
            raise UsageError("empty sample file")
    if args.metric in ("kl",) and chains is None:
        raise UsageError(f"{args.metric} needs --samples")
    if args.metric == "rand-c" and chains is None and args.labels is None:
        raise UsageError("rand-c needs --samples with --truth, or --labels with --reference")
    if args.growing_prefix and args.metric != "perplexity":
        raise UsageError("--growing-prefix only applies to --metric perplexity")
    if args.metric == "kl":
        rows = _eval_kl(args, chains)
    elif args.metric == "rand-c":
        rows = _eval_rand_c(args, chains)
    else:
        rows = _eval_perplexity(args, chains)
    if args.out:
        write_metrics(args.out, rows)
        print(f"wrote {len(rows)} rows to {args.out}")
    else:
        write_metrics(sys.stdout, rows)
    return 0


# -- parser -----------------------------------------------------------------------

def _add_prior_options(p):
    g = p.add_argument_group("prior")
    g.add_argument("--kappa0", type=float)
    g.add_argument("--mu0", help="comma list; default: data mean")
    g.add_argument("--nu0", type=float)
    g.add_argument("--sigma0-sq", help="comma list; default: data variance")
    g.add_argument("--alpha", type=float, nargs=3, default=[1.0, 1.0, 1.0],
                   metavar=("A1", "A2", "A3"))
    g.add_argument("--gamma", type=float, nargs=3, default=[1.0, 1.0, 1.0],
                   metavar=("G1", "G2", "G3"))
    g.add_argument("--hyper-a", type=float, default=1.0, help="Gamma shape on concentrations")
    g.add_argument("--hyper-b", type=float, default=1.0, help="Gamma rate on concentrations")
    g.add_argument("--fixed-hypers", action="store_true", help="do not resample concentrations")


def _add_chain_options(p, chains=1, burnin=1000, samples=100, samples_flag="--samples"):
    p.add_argument("--chains", type=_positive(int), default=chains)
    p.add_argument("--burnin", type=_nonneg_int, default=burnin)
    p.add_argument("--thin", type=_positive(int), default=10)
    p.add_argument(samples_flag, dest="n_samples", type=_positive(int), default=samples,
                   help="recorded samples per chain")
    p.add_argument("--seed", type=int, default=0)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mlchdp", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, help_):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--config", help="INI file with a [%s] section" % name)
        p.set_defaults(func=func)
        return p

    p = add("simulate", cmd_simulate, "write a synthetic dataset and its truth labels")
    p.add_argument("kind", choices=("table1", "hierarchy"))
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--samples-per-dist", type=_positive(int), default=5)
    p.add_argument("--obs-per-sample", type=_positive(int), default=100)

    p = add("features", cmd_features, "band-power + PCA features from signal files")
    p.add_argument("--input-dir", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--pca-dim", type=_nonneg_int, default=5, help="0 keeps raw features")
    p.add_argument("--bands", default="4-8,8-13,13-30,30-100")
    p.add_argument("--window", type=float, default=0.5, help="seconds")
    p.add_argument("--overlap", type=float, default=0.5)

    p = add("fit", cmd_fit, "run MCMC chains")
    p.add_argument("--model", choices=MODELS, default="mlchdp")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--levels", type=int, choices=(2, 3), default=3)
    p.add_argument("--threads", type=_positive(int),
                   help=f"worker threads (default ${THREADS_ENV} or 1)")
    p.add_argument("--explicit-params", action="store_true",
                   help="score channels with sampled atom parameters instead of the predictive")
    p.add_argument("--random-scan", action="store_true")
    p.add_argument("--ndp-top", type=int, default=20)
    p.add_argument("--ndp-bottom", type=int, default=15)
    _add_chain_options(p)
    _add_prior_options(p)

    p = add("evaluate", cmd_evaluate, "metrics as CSV rows")
    p.add_argument("--metric", choices=("kl", "rand-c", "perplexity"), required=True)
    p.add_argument("--samples", nargs="+", help="chain files or fit output directories")
    p.add_argument("--truth")
    p.add_argument("--labels")
    p.add_argument("--reference")
    p.add_argument("--level", choices=("top", "base", "patient"), default="top")
    p.add_argument("--data")
    p.add_argument("--patient", type=int, default=0)
    p.add_argument("--growing-prefix", action="store_true")
    p.add_argument("--assign", choices=ASSIGN_MODES, default="map")
    p.add_argument("--density-out")
    p.add_argument("--out")
    _add_chain_options(p, chains=3, burnin=300, samples=10, samples_flag="--fit-samples")
    _add_prior_options(p)
    return parser


def _config_path(argv):
    for i, a in enumerate(argv):
        if a == "--config" and i + 1 < len(argv):
            return argv[i + 1]
        if a.startswith("--config="):
            return a.split("=", 1)[1]
    return None


def _apply_config(parser, argv):
    """Parse ``argv`` with defaults taken from the --config INI file, if any."""
    argv = list(sys.argv[1:] if argv is None else argv)
    path = _config_path(argv)
    subs = parser._subparsers._group_actions[0].choices
    command = next((a for a in argv if a in subs), None)
    if path is None or command is None:
        return parser.parse_args(argv)
    cp = configparser.ConfigParser()
    if not cp.read(path):
        raise UsageError(f"config file {path} not found")
    sub = subs[command]
    # keys may name either the long option or its destination
    dests = {a.dest: a for a in sub._actions}
    for a in sub._actions:
        for opt in a.option_strings:
            if opt.startswith("--"):
                dests.setdefault(opt[2:].replace("-", "_"), a)
    defaults = {}
    for section in (command, "prior"):
        if not cp.has_section(section):
            continue
        for key, text in cp.items(section):
            dest = key.replace("-", "_")
            if dest not in dests or dest in ("config", "help"):
                raise UsageError(f"unknown option {key!r} in [{section}] of {path}")
            action = dests[dest]
            dest = action.dest
            if isinstance(action, argparse._StoreTrueAction):
                defaults[dest] = cp.getboolean(section, key)
            elif action.nargs not in (None, "?"):
                defaults[dest] = [action.type(t) if action.type else t for t in text.split()]
            else:
                defaults[dest] = action.type(text) if action.type else text
    sub.set_defaults(**defaults)
    for a in sub._actions:
        if a.dest in defaults:
            a.required = False
    return parser.parse_args(argv)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = _apply_config(parser, argv)
        logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        return args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"mlchdp: error: {exc}", file=sys.stderr)
        return 2
    except (DatasetError, ValueError, OSError) as exc:
        print(f"mlchdp: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
