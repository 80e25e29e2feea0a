"""Config-driven pipeline: classify, build and validate the symmetrizer, solve, verify.

Each stage writes its reports through a ``ReportWriter``; every check records a
pass flag in ``Experiment.results``. Nothing here depends on the thread count
except wall time, so reports are byte-identical for any ``threads``.
"""
import math

import numpy as np

from . import __version__ as VERSION
from . import coefficients as co
from . import data as da
from . import mollify as mo
from . import symmetrizer as sy
from . import verify as ve
from .config import resolve, support_radius_of
from .errors import ConditionUndetermined, PreconditionError
from .report import ReportWriter, config_hash
from .solver import LatticeProblem, solve_lattice
from .symbol import STRICT, HYPERBOLIC, CONSTANT_MULT, classify, sphere_directions


_FAMILIES = {"constant": co.constant, "smooth": co.smooth, "piecewise": co.piecewise,
             "holder": co.holder, "singular": co.singular}


def build_family(cfg, base_dir="."):
    spec = cfg["coefficients"]
    if spec["preset"] == "csv":
        c = co.load_csv(resolve(cfg, "coefficients", base_dir))
        if c.n != cfg["n"] or c.m != cfg["m"] or abs(c.T - cfg["T"]) > 1e-12:
            raise PreconditionError("coefficient CSV disagrees with config n, m or T")
        return c
    B = np.asarray(spec["B"], dtype=float)
    try:
        return _FAMILIES[spec["preset"]](B, T=cfg["T"], **spec.get("params", {}))
    except TypeError as exc:
        raise PreconditionError(f"bad parameters for preset {spec['preset']!r}: {exc}") from None


def build_lattice(cfg):
    n, m = cfg["n"], cfg["m"]
    N, L = cfg["grid"]["N"], cfg["grid"]["L"]
    d = dict(cfg["data"])
    preset = d.pop("preset")
    x0 = np.asarray(d.pop("x0"), dtype=float)
    ax = -L / 2 + (L / N) * np.arange(N)
    coords = np.stack(np.meshgrid(*([ax] * n), indexing="ij"), axis=-1)
    u0, info = da.PRESETS[preset](coords, L, x0, m=m, **d)
    return LatticeProblem(n, L, N, u0, support_radius_of(cfg["data"]), x0, meta={"data": info})


def output_times(cfg):
    """Union of the configured output, DOD and PW times; ten even steps by default."""
    T, Nt = cfg["T"], cfg["time"]["Nt"]
    dt = T / Nt
    req = cfg["time"].get("output_times")
    if req is None:
        req = [dt * round(T * k / 10 / dt) for k in range(1, 11)]
    opts = cfg["options"]
    ks = {round(t / dt) for t in req}
    ks |= {round(t / dt) for t in opts.get("dod_times", [])}
    ks |= {round(t / dt) for t in opts.get("pw_times", [])}
    ks |= {0, Nt}
    return [k * dt for k in sorted(ks)]


class Experiment:
    """One config, one output directory.

    Stages run lazily and cache their products, so a subcommand asks only for
    what it needs (``cone`` pulls in ``solve``, which pulls in the symmetrizer).
    """

    def __init__(self, cfg, base_dir=".", out_dir=None, threads=None):
        self.cfg = cfg
        self.base_dir = base_dir
        self.threads = threads
        self.hash = config_hash(cfg)
        self.writer = ReportWriter(out_dir or cfg["output"], self.hash, VERSION)
        self.results = {}
        self._family = self._sym = self._ms = self._run = self._cls = None
        self._trajectory = False

    # ------------------------------------------------------------ stages

    @property
    def family(self):
        if self._family is None:
            self._family = build_family(self.cfg, self.base_dir)
        return self._family

    def classify(self):
        if self._cls is None:
            c = self.family
            cls = classify(c)
            self.writer.json("classification", {"class": cls.to_dict(),
                                                "coefficients": c.describe()})
            source = self.cfg["symmetrizer"]["source"]
            ok = {STRICT} if source == "build_strict" else {STRICT, CONSTANT_MULT, HYPERBOLIC}
            if cls.name not in ok:
                raise PreconditionError(
                    f"coefficients are not strictly hyperbolic: class {cls.name} "
                    f"(witness t = {cls.witness_t:.6g}, xi = {list(cls.witness_xi)}, "
                    f"eigenvalues = {[complex(z) for z in cls.witness_eigenvalues]})")
            self._cls = cls
        return self._cls

    @property
    def symmetrizer(self):
        if self._sym is None:
            self.classify()
            c = self.family
            src = self.cfg["symmetrizer"]["source"]
            if src == "identity":
                self._sym = sy.identity(c)
            elif src == "file":
                self._sym = sy.load_matrix_file(c, resolve(self.cfg, "symmetrizer", self.base_dir))
            else:
                self._sym = sy.build_strict(c)
        return self._sym

    @property
    def mollified(self):
        if self._ms is None:
            self._ms = mo.mollify(self.symmetrizer)
        return self._ms

    @property
    def radii(self):
        return co.cone_radii(self.family, support_radius_of(self.cfg["data"]), self.symmetrizer.Lam)

    def solve(self, trajectory=False):
        if self._run is None or (trajectory and not self._trajectory):
            lp = build_lattice(self.cfg)
            self._run = solve_lattice(lp, self.family, self.cfg["time"]["Nt"],
                                      output_times(self.cfg), Lam=self.symmetrizer.Lam,
                                      threads=self.threads, trajectory=trajectory)
            self._trajectory = trajectory
            self._write_snapshots()
        return self._run

    def _write_snapshots(self):
        run = self._run
        lp = run.problem
        pts = lp.coords().reshape(-1, lp.n)
        header = [f"x{j}" for j in range(lp.n)] + [f"u{k}" for k in range(lp.m)]
        names = []
        for i, u in enumerate(run.fields):
            name = f"snapshot_{i:03d}"
            vals = u.reshape(-1, lp.m)
            self.writer.csv(name, header, np.hstack([pts, vals]).tolist())
            names.append(f"{name}.csv")
        manifest = run.manifest()
        manifest.update({"snapshots": names, "seed": self.cfg["seed"],
                         "coefficients": self.family.describe(),
                         "symmetrizer": self.symmetrizer.describe()})
        self.writer.json("solution", manifest)

    # ------------------------------------------------------------ checks

    def check_symmetrizer(self):
        s, c = self.symmetrizer, self.family
        count = self.cfg["symmetrizer"].get("validation_samples", 512)
        samples = sy.validation_samples(c, count=count, seed=self.cfg["seed"])
        v = sy.validate(s, c, samples)
        a = sy.adjoint_check(s, c, samples)
        self.writer.json("symmetrizer", {"validation": v.to_dict(), "adjoint": a.to_dict(),
                                         "symmetrizer": s.describe(),
                                         "passed": v.passed and a.passed})
        self.results["symmetrizer"] = v.passed and a.passed
        return self.results["symmetrizer"]

    def check_lemma33(self):
        ms = self.mollified
        opts = self.cfg["options"]
        dirs = sphere_directions(ms.base.n, opts["lemma33_directions"])
        dirs = dirs[:opts["lemma33_directions"]]
        recs = [mo.lemma33_report(ms, d, e) for e in opts["lemma33_eps"] for d in dirs]
        bc = mo.bound_check(ms, mo.random_bound_samples(ms, opts["bound_samples"],
                                                        seed=self.cfg["seed"]))
        passed = all(r.passed for r in recs) and bc.passed
        self.writer.json("mollifier", {"kernel": ms.kernel.to_dict(),
                                       "lemma33": [r.to_dict() for r in recs],
                                       "bounds": bc.to_dict(), "passed": passed})
        self.writer.csv("lemma33", list(mo.MollificationRecord.CSV_FIELDS), [r.csv_row() for r in recs])
        self.results["lemma33"] = passed
        return passed

    def check_cone(self):
        run = self.solve()
        rep = ve.cone_check(run, self.radii, theta=self.cfg["options"]["theta"])
        self.writer.json("cone", {**rep.to_dict(), "radii": self.radii.to_dict(rep.times)})
        self.writer.csv("cone", ["t", "measured", "bound", "margin"], rep.csv_rows())
        self.results["cone"] = rep.passed
        return rep.passed

    def check_dod(self):
        run = self.solve()
        d = self.cfg["data"]
        hole = d["hole_radius"] if d["preset"] == "hole" else d["radius"] - d["width"]
        radii = co.cone_radii(self.family, hole, self.symmetrizer.Lam)
        times = self.cfg["options"].get("dod_times")
        if times is None:
            h = run.problem.h
            times = [float(t) for t in run.output_times if radii.rho(t) - 2 * h > 0]
        rep = ve.dod_check(run, radii, times=times)
        self.writer.json("dod", rep.to_dict())
        self.writer.csv("dod", ["t", "measured", "bound", "margin"],
                        [[t, m, b, b - m] for t, m, b, ok in
                         zip(rep.times, rep.max_abs, rep.tolerance, rep.checked) if ok])
        self.results["dod"] = rep.passed
        return rep.passed

    def check_pw(self):
        run = self.solve()
        lp = run.problem
        opts = self.cfg["options"]
        radii = self.radii
        coords = lp.coords()
        times = opts.get("pw_times", [0.0, self.cfg["T"]])
        out = [float(t) for t in run.output_times]
        dirs = sphere_directions(lp.n, opts["pw_directions"])
        reports = []
        for t in times:
            k = int(np.argmin(np.abs(np.asarray(out) - t)))
            r = radii.r(out[k])
            mags = ve.default_magnitudes(r, opts["pw_magnitudes"])
            reports.append(ve.pw_probe(run.fields[k], coords, lp.h, lp.L, out[k], r,
                                       delta=opts["pw_delta"], directions=dirs,
                                       magnitudes=mags, x0=lp.x0))
        passed = all(p.passed for p in reports)
        self.writer.json("pw", {"probes": [p.to_dict() for p in reports], "passed": passed})
        self.writer.csv("pw", ["t", "measured", "bound", "margin"],
                        [[p.t, p.max_slope, p.limit, p.limit - p.max_slope] for p in reports])
        self.results["pw"] = passed
        return passed

    def check_energy(self):
        run = self.solve(trajectory=True)
        ms, c = self.mollified, self.family
        sweep = ve.energy_sweep(run, ms, c, min_abs=self.cfg["options"]["energy_min_abs"],
                                threads=self.threads)
        worst = min(sweep.traces, key=lambda tr: tr.margin_ratio)
        bounds = self._bounds()
        passed = sweep.passed and bounds["passed"] is not False
        self.writer.json("energy", {"sweep": sweep.to_dict(), "bounds_I": bounds,
                                    "worst_mode": worst.summary(), "passed": passed})
        self.writer.csv("energy", ["t", "measured", "bound", "margin"], worst.csv_rows())
        self.results["energy"] = passed
        return passed

    def _bounds(self):
        ms, c = self.mollified, self.family
        try:
            cond = ve.detect_conditions(ms.base, c)
            e0 = np.zeros(c.n)
            e0[0] = 1.0
            recs = [ve.bound_report_I(ms, c, z * e0, cond) for z in (1.0, 4.0, 16.0, 64.0)]
        except ConditionUndetermined as exc:
            return {"route": "undetermined", "reason": str(exc), "passed": None}
        tildes = [r.omega_tilde for r in recs]
        mono = all(b <= a * (1 + 1e-9) + 1e-15 for a, b in zip(tildes, tildes[1:]))
        return {"records": [r.to_dict() for r in recs], "omega_tilde_nonincreasing": mono,
                "passed": bool(all(r.passed for r in recs) and mono)}

    # ------------------------------------------------------------ drivers

    CHECKS = {"symmetrizer": check_symmetrizer, "lemma33": check_lemma33, "cone": check_cone,
              "dod": check_dod, "pw": check_pw, "energy": check_energy}

    def run_checks(self, names):
        if "energy" in names:
            # one solve with the trajectory serves every later check
            self.solve(trajectory=True)
        for name in names:
            self.CHECKS[name](self)
        return self.results

    def finish(self, command):
        summary = {"command": command, "config": self.cfg, "checks": self.results,
                   "passed": all(self.results.values()),
                   "files": dict(sorted(self.writer.files.items()))}
        self.writer.json("manifest", summary)
        return summary


def mutation_selftest(exp):
    """Run the cone and mollifier-bound checks plain and sabotaged.

    Halving ``r(t)`` must make the cone check fail, and scaling ``S_eps`` by
    1.01 must break its two-sided bound. Returns a dict of outcomes; the
    harness is sound when both plain runs pass and both sabotaged runs fail.
    """
    run = exp.solve()
    radii = exp.radii
    theta = exp.cfg["options"]["theta"]
    cone = ve.cone_check(run, radii, theta).passed
    cone_mut = ve.cone_check(run, radii.scaled(0.5), theta).passed
    ms = exp.mollified
    samples = mo.random_bound_samples(ms, exp.cfg["options"]["bound_samples"], seed=exp.cfg["seed"])
    bound = mo.bound_check(ms, samples).passed
    bound_mut = mo.bound_check(ms, samples, mutate=lambda S: 1.01 * S).passed
    out = {"cone_plain_passes": cone, "cone_halved_radius_fails": not cone_mut,
           "bound_plain_passes": bound, "bound_skewed_fails": not bound_mut}
    out["passed"] = all(out.values())
    exp.writer.json("selftest", out)
    exp.results["selftest"] = out["passed"]
    return out
