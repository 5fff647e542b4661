import argparse
import csv
import json
import logging
import sys
import time
from pathlib import Path

from compressible_solver import CompressibleSolver, continuation_monitor
from errors import ConfigError, CriticalFlowError, OutputError
from experiments import (
    emit_outputs, experiment_config_from, generate_initial_data, init_spec_from, run_nu_sweep,
)
from functionals import (
    check_smallness, check_theorem_bound, compute_XYZWV, inputs_from_perturbation,
    perturbation_fields,
)
from helmholtz import project_P
from incompressible_solver import IncompressibleSolver, compute_M
from littlewood_paley import besov_norm, build_partition
from setting_module import (
    cns_config_from, ins_config_from, load_settings, log_level, output_root,
)
from spectral_core import load_snapshot
from trajectory import Trajectory

log = logging.getLogger("criticalflow")

EXIT_OK = 0
EXIT_FAILED_ROWS = 1
EXIT_ERROR = 2
FUNCTIONALS_COLUMNS = ["T", "Xd", "Yd", "Zd", "Wd", "Vd", "E"]


class CriticalFlowApp:
    def __init__(self, out=sys.stdout):
        self.out = out
        self.parser = self._build_parser()

    def _build_parser(self):
        parser = argparse.ArgumentParser(
            prog="criticalflow",
            description="Compressible/incompressible Navier-Stokes runs and critical Besov diagnostics",
        )
        commands = parser.add_subparsers(dest="command", required=True)

        solve = commands.add_parser("solve", help="run one solver and save its trajectory")
        solve.add_argument("--system", choices=("ins", "cns"), required=True)
        solve.add_argument("--config", required=True, help="TOML configuration file")
        solve.add_argument("--out", help="trajectory directory")
        solve.set_defaults(handler=self.run_solve)

        analyze = commands.add_parser("analyze", help="Besov norms of a snapshot, or run functionals")
        analyze.add_argument("snapshot", nargs="?",
                             help="field snapshot (.csv or .npz) or a solve output directory")
        analyze.add_argument("--field", help="field of a run directory (default: the first saved)")
        analyze.add_argument("--index", type=int, default=-1, help="snapshot of a run directory")
        analyze.add_argument("--s", type=float, default=0.0, help="regularity index")
        analyze.add_argument("--functionals", action="store_true")
        analyze.add_argument("--cns", help="compressible run directory")
        analyze.add_argument("--ins", help="incompressible run directory")
        analyze.add_argument("--out", help="directory for functionals.csv and conditions.json")
        analyze.add_argument("--C", type=float, default=1.0, dest="constant_C")
        analyze.set_defaults(handler=self.run_analyze)

        sweep = commands.add_parser("sweep", help="nu-sweep of the incompressible limit")
        sweep.add_argument("--config", required=True, help="TOML configuration file")
        sweep.set_defaults(handler=self.run_sweep)
        return parser

    def _dispatch(self, argv):
        args = self.parser.parse_args(argv)
        return args.handler(args)

    def run(self, argv=None):
        try:
            return self._dispatch(argv)
        except CriticalFlowError as e:
            log.error("%s: %s", type(e).__name__, e)
            return EXIT_ERROR

    # --- solve ---

    def run_solve(self, args):
        settings = load_settings(args.config, args.system)
        out = Path(args.out) if args.out else output_root() / args.system
        started = time.perf_counter()
        if args.system == "ins":
            config = ins_config_from(settings)
            partition = build_partition(config.grid)
            _, v0 = generate_initial_data(init_spec_from(settings), partition, settings["init.seed"])
            traj = IncompressibleSolver(config).run(project_P(v0))
        else:
            config = cns_config_from(settings)
            partition = build_partition(config.grid)
            a0, v0 = generate_initial_data(init_spec_from(settings), partition,
                                           settings["init.seed"], config.params.nu)
            traj = CompressibleSolver(config).run(a0, v0)
        traj.config["init"] = {k: v for k, v in settings.items() if k.startswith("init.")}
        traj.save(out, wall_time=time.perf_counter() - started)
        print(f"{args.system} trajectory: {len(traj)} snapshots -> {out}", file=self.out)
        return EXIT_OK

    # --- analyze ---

    def run_analyze(self, args):
        if args.functionals:
            if not (args.cns and args.ins):
                raise ConfigError("analyze --functionals needs --cns and --ins run directories")
            return self._functionals(args)
        if not args.snapshot:
            raise ConfigError("analyze needs a snapshot file or --functionals")
        field = self._load_field(args)
        partition = build_partition(field.grid)
        norm = besov_norm(partition, field, args.s)
        print("j,block_norm,weight_s", file=self.out)
        for j, weighted in norm.per_block.items():
            weight = 2.0 ** (j * args.s)
            print(f"{j},{weighted / weight!r},{weight!r}", file=self.out)
        print(f"besov_norm,{args.s!r},{norm.value!r}", file=self.out)
        return EXIT_OK

    def _load_field(self, args):
        path = Path(args.snapshot)
        if not path.is_dir():
            try:
                field, _ = load_snapshot(path)
            except OSError as e:
                raise ConfigError(f"cannot read snapshot {path}: {e}") from e
            return field
        traj = Trajectory.load(path)
        traj.require_nonempty()
        try:
            snap = traj[args.index]
        except IndexError:
            raise ConfigError(f"{path} has {len(traj)} snapshots, no index {args.index}") from None
        name = args.field or next(iter(snap.fields))
        if name not in snap.fields:
            raise ConfigError(f"{path} has fields {sorted(snap.fields)}, not {name!r}")
        log.info("analyzing field %s at t=%g from %s", name, snap.t, path)
        return snap.fields[name]

    def _functionals(self, args):
        cns_traj, ins_traj = Trajectory.load(args.cns), Trajectory.load(args.ins)
        partition = build_partition(cns_traj.grid)
        nu = float(cns_traj.config["nu"])
        mu = float(cns_traj.config["mu"])
        pert = perturbation_fields(cns_traj, ins_traj)
        report = compute_XYZWV(pert, partition, nu, mu)
        M = compute_M(ins_traj, partition)
        inputs = inputs_from_perturbation(pert, partition, M, mu, nu)
        smallness = check_smallness(inputs, args.constant_C, report)
        bound = check_theorem_bound(report, inputs, args.constant_C)
        monitor = continuation_monitor(cns_traj, partition)

        out = Path(args.out) if args.out else Path(args.cns)
        try:
            out.mkdir(parents=True, exist_ok=True)
            with open(out / "functionals.csv", "w", encoding="utf-8", newline="") as f:
                writer = csv.writer(f)
                writer.writerow(FUNCTIONALS_COLUMNS)
                writer.writerows([repr(float(x)) for x in row] for row in report.rows())
            conditions = {
                "C": args.constant_C,
                "M": M,
                "nu": nu,
                "mu": mu,
                "smallness": {"lhs": smallness.lhs, "rhs": smallness.rhs,
                              "ratio": smallness.ratio, "largest_C": smallness.largest_C,
                              "holds": smallness.holds},
                "bound": {"lhs": bound.lhs, "rhs": bound.rhs,
                          "empirical_C": bound.empirical_C, "holds": bound.holds},
                "monitor": {"grad_v_integral": monitor.grad_v_integral,
                            "a_sup_norm": monitor.a_sup_norm, "inf_rho": monitor.inf_rho,
                            "flagged": monitor.flagged, "reasons": monitor.reasons},
                "lj_final": {str(j): float(p[-1]) for j, p in report.lj.items()},
                "lj_decay": {str(j): entry
                             for j, entry in report.diagnostics.get("lj_decay", {}).items()},
            }
            with open(out / "conditions.json", "w", encoding="utf-8") as f:
                json.dump(conditions, f, indent=2)
        except OSError as e:
            raise OutputError(f"cannot write functionals to {out}: {e}") from e
        print(f"T={report.times[-1]:g} E={report.error:.6e} -> {out}", file=self.out)
        return EXIT_OK

    # --- sweep ---

    def run_sweep(self, args):
        config = experiment_config_from(load_settings(args.config, "sweep"))
        result = run_nu_sweep(config)
        emit_outputs(result, config.output_dir)
        if result.fit is not None:
            print(f"slope {result.fit.slope:.4f} (r2 {result.fit.r2:.4f}, "
                  f"{result.fit.seeds} seeds)", file=self.out)
        elif result.note:
            print(result.note, file=self.out)
        if result.failed_rows:
            log.error("%d sweep row(s) failed", len(result.failed_rows))
            return EXIT_FAILED_ROWS
        return EXIT_OK


def main(argv=None):
    logging.basicConfig(level=log_level(), format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    return CriticalFlowApp().run(argv)


if __name__ == "__main__":
    sys.exit(main())
