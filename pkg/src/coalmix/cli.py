"""Command-line entry point.

Every stochastic subcommand requires an explicit --seed; machine-readable
output goes to stdout or files, logs to stderr.  Numeric inputs are echoed
back as '#' comment lines so result files are self-describing.

Exit codes: 0 success, 2 partial sweep failure, 64 usage error, 65 domain error.
"""

from __future__ import annotations

import argparse
import sys

import numpy as np

from . import coalescent, detection, exact, reconstruct, sequences, sweep, trees
from .errors import CalibrationError, DomainError
from .rng import derive_rng

EX_USAGE = 64
EX_DATAERR = 65


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EX_USAGE, f"{self.prog}: error: {message}\n")


def _log(msg: str) -> None:
    print(msg, file=sys.stderr)


def build_parser() -> _Parser:
    parser = _Parser(prog="coalmix", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="simulate genes on a species tree; write FASTA and theta CSV")
    p.add_argument("--tree", required=True, help="species tree in Newick (clock, coalescent units)")
    p.add_argument("--genes", type=int, required=True)
    p.add_argument("--k", type=int, required=True, help="sites per gene")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--fasta-out", default=None)
    p.add_argument("--theta-out", default=None)
    p.add_argument("--pair", default=None, metavar="A,B",
                   help="with --samples-out: leaf pair whose per-gene thetas to extract")
    p.add_argument("--samples-out", default=None, help="theta-samples CSV for --pair")

    p = sub.add_parser("pmf", help="exact distance-count pmf as CSV (j, prob)")
    p.add_argument("--tau", type=float, default=None, help="null divergence time")
    p.add_argument("--f", type=float, default=None, help="use the shorter tree (divergence 1-f)")
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--out", default=None, help="output CSV (default stdout)")

    p = sub.add_parser("hellinger", help="divergences between the null and shorter-tree pmfs")
    p.add_argument("--f", type=float, required=True)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--m", type=int, default=1, help="gene count for the tensorized bracket")

    p = sub.add_parser("scan", help="Hellinger scaling scan over an f grid")
    p.add_argument("--kappa", type=float, required=True)
    p.add_argument("--f-grid", type=float, nargs="+", required=True)
    p.add_argument("--interval-constant", type=float, default=1.0)
    p.add_argument("--out", required=True)

    p = sub.add_parser("test", help="run a detection test on theta-sample CSV files")
    p.add_argument("--test", choices=("oracle", "agnostic", "mean", "min"), required=True)
    p.add_argument("--samples", required=True, help="theta samples CSV (dataset 1)")
    p.add_argument("--samples2", default=None, help="second dataset (two-sample tests)")
    p.add_argument("--f", type=float, default=None, help="oracle test: branch shortening")
    p.add_argument("--C", type=float, default=1.0, help="quantile constant")
    p.add_argument("--seed", type=int, default=None, help="split seed (required for agnostic)")

    p = sub.add_parser("sweep", help="run a Monte-Carlo sweep from a JSON config")
    p.add_argument("--config", required=True)
    p.add_argument("--out", default=None, help="override the config's output path")
    p.add_argument("--threads", type=int, default=1, help="worker cap (cells are sequential per worker)")

    p = sub.add_parser("calibrate", help="calibrate the m-multiplier constants at one grid point")
    p.add_argument("--f", type=float, required=True)
    p.add_argument("--kappa", type=float, required=True)
    p.add_argument("--target", type=float, default=0.9)
    p.add_argument("--test", choices=sweep.TESTS, default="oracle")
    p.add_argument("--replicates", type=int, default=200)
    p.add_argument("--seed", type=int, required=True)

    p = sub.add_parser("reconstruct", help="infer a topology from a multi-gene theta CSV")
    p.add_argument("--thetas", required=True, help="stacked theta-matrix CSV")
    p.add_argument("--mode", choices=("triplet", "tree"), default="tree")
    p.add_argument("--C", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0, help="split seed for triplet comparisons")
    return parser


def _cmd_simulate(args) -> int:
    species = trees.from_newick(args.tree)
    seqsets = []
    mats = []
    for g in range(args.genes):
        gene = coalescent.sample_gene_tree(species, derive_rng(args.seed, g, 0))
        coalescent.attach_mutation_probs(gene, species)
        ss = sequences.simulate_sequences(gene, args.k, derive_rng(args.seed, g, 1))
        ss.gene_index = g
        seqsets.append(ss)
        mats.append(sequences.theta_matrix(ss))
    meta = {"tree": args.tree, "genes": args.genes, "k": args.k, "seed": args.seed}
    if args.fasta_out:
        sequences.write_fasta(seqsets, args.fasta_out)
        _log(f"wrote {args.fasta_out}")
    if args.theta_out:
        sequences.write_theta_matrices(mats, args.theta_out, metadata=meta)
        _log(f"wrote {args.theta_out}")
    if (args.pair is None) != (args.samples_out is None):
        raise DomainError("--pair and --samples-out go together")
    if args.pair:
        try:
            a, b = args.pair.split(",")
        except ValueError:
            raise DomainError(f"--pair must be 'A,B', got {args.pair!r}") from None
        thetas = np.array([mat.pair(a, b) for mat in mats], dtype=np.int64)
        detection.GeneSampleSet(k=args.k, thetas=thetas).to_csv(args.samples_out, metadata=meta)
        _log(f"wrote {args.samples_out}")
    if not args.fasta_out and not args.theta_out and not args.samples_out:
        raise DomainError("simulate needs --fasta-out, --theta-out, and/or --samples-out")
    return 0


def _cmd_pmf(args) -> int:
    if (args.tau is None) == (args.f is None):
        raise DomainError("pmf needs exactly one of --tau or --f")
    if args.tau is not None:
        mix = exact.null_mixing_density(args.tau)
        meta = f"# tau={args.tau:.10g}\n"
    else:
        _, _, mix = exact.mixture_decompose(args.f)
        meta = f"# f={args.f:.10g}\n"
    pmf = exact.pmf_theta(args.k, mix)
    lines = [meta, f"# k={args.k}\n", "j,prob\n"]
    lines += [f"{j},{p:.12g}\n" for j, p in enumerate(pmf.probs)]
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.writelines(lines)
        _log(f"wrote {args.out}")
    else:
        sys.stdout.writelines(lines)
    return 0


def _cmd_hellinger(args) -> int:
    null = exact.null_mixing_density(1.0)
    sigma_f, _, alt = exact.mixture_decompose(args.f)
    p = exact.pmf_theta(args.k, null)
    q = exact.pmf_theta(args.k, alt)
    h2 = exact.hellinger2(p, q)
    lo, hi = exact.tv_bracket_m(h2, args.m)
    print(f"# f={args.f:.10g} k={args.k} m={args.m}")
    print(f"sigma_f {sigma_f:.12g}")
    print(f"h2_single {h2:.12g}")
    print(f"tv_single {exact.tv(p, q):.12g}")
    print(f"h2_tensorized {exact.tensorize_h2(h2, args.m):.12g}")
    print(f"tv_m_lower {lo:.12g}")
    print(f"tv_m_upper {hi:.12g}")
    return 0


def _cmd_scan(args) -> int:
    rows = exact.hellinger_scaling_scan(args.kappa, args.f_grid, args.interval_constant)
    exact.write_scan_csv(
        rows,
        args.out,
        metadata={
            "kappa": f"{args.kappa:.10g}",
            "interval_constant": f"{args.interval_constant:.10g}",
        },
    )
    _log(f"wrote {args.out} ({len(rows)} rows)")
    return 0


def _cmd_test(args) -> int:
    d1 = detection.GeneSampleSet.from_csv(args.samples)
    if args.test == "oracle":
        if args.f is None:
            raise DomainError("the oracle test needs --f to compute its tail probabilities")
        p0, w, wp = exact.oracle_tail_probs(args.f, d1.k)
        verdict = detection.oracle_quantile_test(d1, p0, w, wp)
        print(verdict.to_json())
        return 0
    if args.samples2 is None:
        raise DomainError(f"the {args.test} test needs --samples2")
    d2 = detection.GeneSampleSet.from_csv(args.samples2)
    if args.test == "agnostic":
        if args.seed is None:
            raise DomainError("the agnostic test needs an explicit --seed for its split")
        verdict = detection.agnostic_two_sample_test(
            d1, d2, quantile_constant=args.C, split_seed=args.seed
        )
    elif args.test == "mean":
        verdict = detection.mean_test(d1, d2)
    else:
        verdict = detection.min_test(d1, d2)
    print(verdict.to_json())
    return 0


def _cmd_sweep(args) -> int:
    config = sweep.SweepConfig.from_json(args.config)
    if args.out:
        config = sweep.SweepConfig(**{**config.__dict__, "out_path": args.out})
    if not config.out_path:
        raise DomainError("sweep needs an output path (config out_path or --out)")
    if args.threads < 1:
        raise DomainError("--threads must be at least 1")
    records = sweep.run_sweep(config, threads=args.threads)
    failures = [r for r in records if r.error]
    _log(f"wrote {config.out_path} ({len(records)} cells, {len(failures)} failed)")
    return 2 if failures else 0


def _cmd_calibrate(args) -> int:
    result = sweep.calibrate_constants(
        args.f, args.kappa, args.target,
        test=args.test, master_seed=args.seed, replicates=args.replicates,
    )
    print(result.to_json())
    return 0


def _cmd_reconstruct(args) -> int:
    mats = sequences.read_theta_matrices(args.thetas)
    if args.mode == "triplet":
        call = reconstruct.triplet_topology(mats, quantile_constant=args.C, split_seed=args.seed)
        print(call.to_json())
        return 0
    est = reconstruct.quantile_distance_estimate(mats, quantile_constant=args.C)
    if est.saturated:
        raise DomainError(f"saturated distance estimates for pairs: {est.saturated}")
    tree = reconstruct.single_linkage_tree(est.matrix, est.labels)
    print(tree.to_newick())
    return 0


_COMMANDS = {
    "simulate": _cmd_simulate,
    "pmf": _cmd_pmf,
    "hellinger": _cmd_hellinger,
    "scan": _cmd_scan,
    "test": _cmd_test,
    "sweep": _cmd_sweep,
    "calibrate": _cmd_calibrate,
    "reconstruct": _cmd_reconstruct,
}


def dispatch(argv: list[str]) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except (DomainError, CalibrationError) as exc:
        _log(f"coalmix {args.command}: {exc}")
        return EX_DATAERR


def main() -> None:
    sys.exit(dispatch(sys.argv[1:]))


if __name__ == "__main__":
    main()
