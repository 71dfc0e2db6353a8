"""Command-line runner: scenario orchestration and figure/report emission.

Subcommands
-----------
liquidation        fig1_strategies.csv, fig1_price.csv (one and infinitely many dealers)
diffusive          fig2_paths.csv plus an OU-regression summary JSON
welfare            fig3_welfare.csv plus a welfare report JSON
scaling-smooth     smooth-demand cost scaling report (JSON + CSV)
scaling-diffusive  diffusive-demand cost scaling report (JSON + CSV)
oracle-check       discrete-oracle gap report JSON
equilibrium        generic equilibrium paths CSV from an INI config file

Exit codes: 0 success, 1 configuration/validation error, 2 numerical failure.
"""

from __future__ import annotations

import argparse
import configparser
import math
import sys
from dataclasses import asdict
from pathlib import Path

from .asymptotics import DealerSetting, scaling_study
from .equilibrium import ConsistencyError, solve_equilibrium
from .kernel import Horizon
from .market import AgentSpec, MarketParams, validate
from .oracle import oracle_gap
from .processes import (
    BrownianMartingale,
    Constant,
    DemandProcess,
    Deterministic,
    OrnsteinUhlenbeck,
    SmoothRate,
    ZERO,
)
from .reports import run_metadata, write_csv, write_json
from .scenarios import (
    INF_DEALERS,
    DiffusiveScenario,
    LiquidationScenario,
    diffusive_simulate,
    liquidation_closed_form,
    price_reversion_regression,
    segmentation_welfare,
)


class ConfigError(ValueError):
    pass


class NumericalError(RuntimeError):
    pass


def _parse_lambdas(text: str) -> list[float]:
    try:
        values = [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise ConfigError(f"bad impact-cost list {text!r}")
    if not values or any(v <= 0 for v in values):
        raise ConfigError("impact costs must be positive")
    return values


def parse_process(text: str) -> DemandProcess:
    """Process grammar: zero | constant:c | brownian:x0,sigma | ou:x0,kappa,theta,sigma
    | deterministic:v0,v1,... | smooth:<one of the above>."""
    text = text.strip()
    if text == "zero":
        return ZERO
    kind, _, rest = text.partition(":")
    try:
        if kind == "constant":
            return Constant(float(rest))
        if kind == "brownian":
            x0, sigma = (float(x) for x in rest.split(","))
            return BrownianMartingale(x0, sigma)
        if kind == "ou":
            x0, kappa, theta, sigma = (float(x) for x in rest.split(","))
            return OrnsteinUhlenbeck(x0, kappa, theta, sigma)
        if kind == "deterministic":
            return Deterministic(tuple(float(x) for x in rest.split(",")))
        if kind == "smooth":
            return SmoothRate(parse_process(rest))
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"bad process spec {text!r}: {exc}") from None
    raise ConfigError(f"unknown process kind {text!r}")


def load_market_config(path: str) -> tuple[MarketParams, dict]:
    """Flat INI: one [market] section, optional [noise], one section per agent."""
    cp = configparser.ConfigParser()
    read = cp.read(path)
    if not read:
        raise ConfigError(f"config file {path!r} not found or empty")
    if "market" not in cp:
        raise ConfigError("config needs a [market] section")
    try:
        T = cp.getfloat("market", "T")
        lam = cp.getfloat("market", "impact_cost")
        steps = cp.getint("market", "steps")
    except (configparser.NoOptionError, ValueError) as exc:
        raise ConfigError(f"bad [market] section: {exc}") from None
    noise = ZERO
    if "noise" in cp:
        noise = parse_process(cp.get("noise", "process", fallback="zero"))
    agents = []
    for section in cp.sections():
        if not section.startswith("agent "):
            continue
        name = section[len("agent "):].strip()
        try:
            cost_text = cp.get(section, "open_cost", fallback="0")
            open_cost = math.inf if cost_text.strip() in ("inf", "no-access") else float(cost_text)
            agents.append(
                AgentSpec(
                    name=name,
                    mass=cp.getfloat(section, "mass"),
                    risk_tolerance=cp.getfloat(section, "risk_tolerance"),
                    open_cost=open_cost,
                    target=parse_process(cp.get(section, "target", fallback="zero")),
                )
            )
        except (configparser.NoOptionError, ValueError) as exc:
            raise ConfigError(f"bad [{section}] section: {exc}") from None
    if T <= 0 or steps < 1:
        raise ConfigError("horizon and step count must be positive")
    params = MarketParams(Horizon.uniform(T, steps), lam, tuple(agents), noise)
    echo = {s: dict(cp.items(s)) for s in cp.sections()}
    return params, echo


# ----------------------------------------------------------------------
# subcommands
# ----------------------------------------------------------------------

def _outdir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_liquidation(args) -> None:
    out = _outdir(args)
    grid = Horizon.uniform(args.T, args.steps).grid
    one = liquidation_closed_form(
        LiquidationScenario(args.impact_cost, args.rho_c, args.rho_d, args.T, args.xi_c, 1), grid
    )
    many = liquidation_closed_form(
        LiquidationScenario(
            args.impact_cost, args.rho_c, args.rho_d, args.T, args.xi_c, INF_DEALERS
        ),
        grid,
    )
    write_csv(
        out / "fig1_strategies.csv",
        ["t", "K_c_M1", "K_c_Minf"],
        zip(grid, one.K_c, many.K_c),
    )
    write_csv(
        out / "fig1_price.csv",
        ["t", "price_dev_M1", "price_dev_Minf"],
        zip(grid, one.price_dev, many.price_dev),
    )
    write_json(
        out / "run_meta.json",
        {
            **run_metadata(_scenario_echo(args), None, args.steps),
            "outputs": ["fig1_strategies.csv", "fig1_price.csv"],
        },
    )


def cmd_diffusive(args) -> None:
    out = _outdir(args)
    base = dict(
        impact_cost=args.impact_cost,
        rho_c=args.rho_c,
        rho_d=args.rho_d,
        T=args.T,
        sigma_xi=args.sigma_xi,
        seed=args.seed,
        steps=args.steps,
    )
    one = diffusive_simulate(DiffusiveScenario(n_dealers=1, **base))
    many = diffusive_simulate(DiffusiveScenario(n_dealers=INF_DEALERS, **base))
    write_csv(
        out / "fig2_paths.csv",
        ["t", "xi_c", "K_c_M1", "K_c_Minf"],
        zip(one.grid, one.xi_c, one.K_c, many.K_c),
    )
    reg = price_reversion_regression(
        DiffusiveScenario(n_dealers=1, **base), n_paths=args.paths, t_max=args.T / 2
    )
    write_json(
        out / "ou_regression.json",
        {**run_metadata(_scenario_echo(args), args.seed, args.steps), "regression": reg},
    )


def cmd_welfare(args) -> None:
    out = _outdir(args)
    rows = []
    for m in range(1, args.m_max + 1):
        rep = segmentation_welfare(
            LiquidationScenario(args.impact_cost, args.rho_c, args.rho_d, args.T, args.xi_c, m)
        )
        rows.append((m, rep.J_c_segmented, rep.J_c_integrated))
    write_csv(out / "fig3_welfare.csv", ["M", "J_c", "J_c_int"], rows)
    report = segmentation_welfare(
        LiquidationScenario(args.impact_cost, args.rho_c, args.rho_d, args.T, args.xi_c, args.m)
    )
    write_json(
        out / "welfare_report.json",
        {**run_metadata(_scenario_echo(args), None, None), "report": asdict(report)},
    )


def _scaling_common(args, demand, out_json: str, out_csv: str) -> None:
    out = _outdir(args)
    setting = DealerSetting(n_dealers=args.m, rho_d=args.rho_d, T=args.T)
    report = scaling_study(
        setting,
        demand,
        _parse_lambdas(args.impact_cost),
        n_paths=args.paths,
        seed=args.seed,
        workers=args.workers,
    )
    payload = asdict(report)
    payload.pop("seed")
    payload["M"] = payload.pop("n_dealers")
    write_json(
        out / out_json,
        {**run_metadata(_scaling_echo(args), args.seed, None), "report": payload},
    )
    write_csv(
        out / out_csv,
        ["lambda", "mean_cost", "stderr", "paths", "steps"],
        zip(report.lambdas, report.means, report.stderrs, report.path_counts, report.steps),
    )


def cmd_scaling_smooth(args) -> None:
    if args.paths > 0:
        demand = SmoothRate(OrnsteinUhlenbeck(x0=1.0, kappa=1.0, theta=1.0, sigma=0.3))
    else:
        demand = SmoothRate(Constant(1.0))
    _scaling_common(args, demand, "scaling_report.json", "scaling_report.csv")


def cmd_scaling_diffusive(args) -> None:
    if args.demand == "ou":
        demand = OrnsteinUhlenbeck(x0=0.0, kappa=2.0, theta=0.0, sigma=1.0)
    else:
        demand = BrownianMartingale(0.0, 1.0)
    _scaling_common(args, demand, "scaling_report.json", "scaling_report.csv")


def cmd_oracle_check(args) -> None:
    out = _outdir(args)
    from .market import segmented_market

    steps_list = [int(x) for x in args.steps_list.split(",")]
    params = segmented_market(
        Horizon.uniform(args.T, max(steps_list)),
        args.impact_cost,
        args.rho_c,
        args.rho_d,
        1,
        Constant(args.xi_c),
    )
    report = oracle_gap(params, steps_list)
    worst = max(max(v) for v in report.max_gaps.values())
    write_json(
        out / "oracle_gap.json",
        {
            **run_metadata(_scenario_echo(args), None, max(steps_list)),
            "report": asdict(report),
            "worst_gap": worst,
        },
    )
    if not (0.5 <= report.fitted_order <= 1.5):
        raise NumericalError(
            f"discrete oracle convergence order {report.fitted_order:.2f} out of range"
        )


def cmd_equilibrium(args) -> None:
    out = _outdir(args)
    params, echo = load_market_config(args.config)
    if args.steps:
        params = MarketParams(
            Horizon.uniform(params.horizon.T, args.steps),
            params.impact_cost,
            params.agents,
            params.noise_demand,
        )
    diag = validate(params)
    if not diag.ok:
        raise ConfigError(str(diag))
    sol = solve_equilibrium(params, seed=args.seed)
    header = ["t", "U_bar", "u_bar", "mu", "price_dev", "K_N", "xi_bar"]
    cols = [
        sol.horizon.grid,
        sol.U_bar,
        sol.u_bar,
        sol.mu,
        sol.price_dev,
        sol.noise,
        sol.xi_bar,
    ]
    for a in params.agents:
        header += [f"K_{a.name}", f"U_{a.name}", f"u_{a.name}"]
        cols += [sol.agents[a.name].K, sol.agents[a.name].U, sol.agents[a.name].u]
    write_csv(out / "equilibrium.csv", header, zip(*cols))
    write_json(
        out / "run_meta.json",
        {
            **run_metadata(echo, args.seed, params.horizon.n_steps),
            "outputs": ["equilibrium.csv"],
        },
    )


def _scenario_echo(args) -> dict:
    keys = ["impact_cost", "rho_c", "rho_d", "T", "xi_c", "sigma_xi", "steps", "m", "m_max",
            "paths", "steps_list"]
    return {k: getattr(args, k) for k in keys if hasattr(args, k)}


def _scaling_echo(args) -> dict:
    return {
        "impact_cost": args.impact_cost,
        "m": args.m,
        "rho_d": args.rho_d,
        "T": args.T,
        "paths": args.paths,
        "demand": getattr(args, "demand", None),
    }


# ----------------------------------------------------------------------
# parser
# ----------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dealerlab",
        description="equilibrium liquidity laboratory for competitive dealer markets",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--out", default="out", help="output directory")
        p.add_argument("--seed", type=int, default=0, help="base seed for substreams")

    def add_scenario(p, xi=True):
        p.add_argument("--lambda", dest="impact_cost", type=float, default=0.1,
                       help="common open-market impact cost")
        p.add_argument("--rho-c", type=float, default=0.1)
        p.add_argument("--rho-d", type=float, default=0.1)
        p.add_argument("--T", type=float, default=1.0)
        if xi:
            p.add_argument("--xi-c", type=float, default=-1.0, help="client target level")

    p = sub.add_parser("liquidation", help="optimal-liquidation figure data")
    add_common(p)
    add_scenario(p)
    p.add_argument("--steps", type=int, default=1000)
    p.set_defaults(func=cmd_liquidation)

    p = sub.add_parser("diffusive", help="diffusive-target figure data")
    add_common(p)
    add_scenario(p, xi=False)
    p.add_argument("--sigma-xi", type=float, default=1.0, help="target volatility")
    p.add_argument("--steps", type=int, default=1000)
    p.add_argument("--paths", type=int, default=4000, help="paths for the OU regression")
    p.set_defaults(func=cmd_diffusive)

    p = sub.add_parser("welfare", help="segmentation welfare study")
    add_common(p)
    add_scenario(p)
    p.add_argument("--m-max", type=int, default=20, help="dealer counts 1..m_max for the CSV")
    p.add_argument("--m", type=int, default=1, help="dealer count for the JSON report")
    p.set_defaults(func=cmd_welfare)

    for name, fn in (("scaling-smooth", cmd_scaling_smooth),
                     ("scaling-diffusive", cmd_scaling_diffusive)):
        p = sub.add_parser(name, help=f"{name.split('-')[1]}-demand cost scaling study")
        add_common(p)
        p.add_argument("--lambda", dest="impact_cost",
                       default="1e-1,1e-2,1e-3,1e-4,1e-5",
                       help="comma list of impact costs")
        p.add_argument("--m", type=int, default=2, help="dealer count")
        p.add_argument("--rho-d", type=float, default=0.1)
        p.add_argument("--T", type=float, default=1.0)
        p.add_argument("--paths", type=int,
                       default=0 if name == "scaling-smooth" else 10_000)
        p.add_argument("--workers", type=int, default=1)
        if name == "scaling-diffusive":
            p.add_argument("--demand", choices=["brownian", "ou"], default="brownian")
        p.set_defaults(func=fn)

    p = sub.add_parser("oracle-check", help="discrete-oracle gap report")
    add_common(p)
    add_scenario(p)
    p.add_argument("--steps-list", default="250,500,1000,2000")
    p.set_defaults(func=cmd_oracle_check)

    p = sub.add_parser("equilibrium", help="solve a market from a config file")
    add_common(p)
    p.add_argument("--config", required=True, help="INI market description")
    p.add_argument("--steps", type=int, default=0, help="override the config grid")
    p.set_defaults(func=cmd_equilibrium)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code == 0 else 1
    try:
        args.func(args)
    except (ConfigError, ValueError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 1
    except (NumericalError, ConsistencyError, RuntimeError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
