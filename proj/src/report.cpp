#include <cmath>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include "stablesde/experiments.hpp"

namespace stablesde {

namespace {

const char* kind_name(AbscissaKind k) {
  switch (k) {
    case AbscissaKind::two_minus_alpha: return "two_minus_alpha";
    case AbscissaKind::alpha_gap: return "alpha_gap";
    case AbscissaKind::dimension: return "dimension";
    case AbscissaKind::time: return "time";
  }
  return "unknown";
}

std::string num(double v) {
  if (std::isnan(v)) return "nan";
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.12g", v);
  return buf;
}

void write_file(const std::filesystem::path& p, const std::string& text) {
  std::ofstream f(p, std::ios::binary);
  if (!f) throw std::runtime_error("emit_report: cannot open " + p.string());
  f << text;
  if (!f) throw std::runtime_error("emit_report: write failed " + p.string());
}

// self-contained matplotlib script rendering log-log rate figures as SVG
const char* kPlotScript = R"PY(#!/usr/bin/env python3
"""Render log-log rate figures from the experiment CSVs next to this script."""
import csv
import math
import os
import sys

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt

here = os.path.dirname(os.path.abspath(__file__))
fits_path = os.path.join(here, "fits.csv")
points_path = os.path.join(here, "fit_points.csv")

fits = list(csv.DictReader(open(fits_path, newline="")))
points = list(csv.DictReader(open(points_path, newline="")))

if not fits:
    print("no fits to plot")
    sys.exit(0)

fig, ax = plt.subplots(figsize=(6.4, 4.8))
for fit in fits:
    label = fit["label"]
    xs, ys, es = [], [], []
    for row in points:
        if row["label"] != label:
            continue
        xs.append(float(row["abscissa"]))
        ys.append(float(row["w1"]))
        es.append(float(row["stderr"]))
    if not xs:
        continue
    ax.errorbar(xs, ys, yerr=es, marker="o", ls="none", label=label, capsize=2)
    slope = float(fit["slope"])
    intercept = float(fit["intercept"])
    if math.isfinite(slope) and min(xs) > 0:
        gx = [min(xs), max(xs)]
        gy = [math.exp(intercept) * x ** slope for x in gx]
        ax.plot(gx, gy, ls="--", lw=1,
                label=f"{label} fit: slope {slope:.3f}")
ax.set_xscale("log")
ax.set_yscale("log")
ax.set_xlabel("abscissa")
ax.set_ylabel("W1")
ax.legend(fontsize=7)
ax.grid(True, which="both", alpha=0.3)
out = os.path.join(here, "rates.svg")
fig.savefig(out, format="svg", bbox_inches="tight")
print("wrote", out)
)PY";

}  // namespace

void emit_report(const ExperimentResult& result, const ExperimentConfig& cfg) {
  namespace fs = std::filesystem;
  const fs::path dir(cfg.output_dir);
  fs::create_directories(dir);

  // manifest first: written even when there are no cells
  {
    std::string m;
    m += "library_version = " + std::string(kLibraryVersion) + "\n";
    m += "experiment = " + result.experiment_id + "\n";
    m += "model = " + cfg.model_id + "\n";
    m += "seed = " + std::to_string(cfg.seed) + "\n";
    m += "threads = " + std::to_string(cfg.threads) + "\n";
    m += "n_paths = " + std::to_string(cfg.n_paths) + "\n";
    m += "dt = " + num(cfg.dt) + "\n";
    m += "t_end = " + num(cfg.t_end) + "\n";
    m += "burn_in = " + num(cfg.burn_in) + "\n";
    m += "sigma0 = " + num(cfg.sigma0) + "\n";
    std::string grid;
    for (double a : cfg.alpha_grid) grid += (grid.empty() ? "" : ",") + num(a);
    m += "alpha_grid = " + grid + "\n";
    grid.clear();
    for (double a : cfg.vartheta_grid) grid += (grid.empty() ? "" : ",") + num(a);
    m += "vartheta_grid = " + grid + "\n";
    grid.clear();
    for (int d : cfg.dims) grid += (grid.empty() ? "" : ",") + std::to_string(d);
    m += "dims = " + grid + "\n";
    m += "cells = " + std::to_string(result.cells.size()) + "\n";
    m += "acceptance_ok = " + std::string(result.acceptance_ok ? "1" : "0") + "\n";
    m += "convergence_ok = " +
         std::string(result.convergence_ok ? "1" : "0") + "\n";
    for (std::size_t i = 0; i < result.notes.size(); ++i)
      m += "note" + std::to_string(i) + " = " + result.notes[i] + "\n";
    write_file(dir / "manifest.txt", m);
  }
  if (result.cells.empty()) return;

  {
    std::string csv =
        "experiment,d,alpha,vartheta,t,abscissa,w1_oracle,oracle_err,"
        "w1_mc_raw,mc_baseline,mc_stderr,w1_mc_mid,oracle_tag,converged\r\n";
    for (const auto& c : result.cells) {
      csv += c.experiment + "," + std::to_string(c.d) + "," + num(c.alpha) +
             "," + num(c.vartheta) + "," + num(c.t) + "," + num(c.abscissa) +
             "," + num(c.w1_oracle) + "," + num(c.oracle_err) + "," +
             num(c.w1_mc_raw) + "," + num(c.mc_baseline) + "," +
             num(c.mc_stderr) + "," + num(c.w1_mc_mid) + "," + c.oracle_tag +
             "," + (c.converged ? "1" : "0") + "\r\n";
    }
    write_file(dir / "cells.csv", csv);
  }
  {
    std::string csv =
        "label,kind,n_points,slope,slope_se,slope_lo,slope_hi,intercept,r2,"
        "baseline_subtracted\r\n";
    for (const auto& f : result.fits) {
      csv += f.label + "," + kind_name(f.kind) + "," +
             std::to_string(f.points.size()) + "," + num(f.fit.slope) + "," +
             num(f.fit.slope_se) + "," + num(f.fit.slope_lo) + "," +
             num(f.fit.slope_hi) + "," + num(f.fit.intercept) + "," +
             num(f.fit.r2) + "," + (f.baseline_subtracted ? "1" : "0") + "\r\n";
    }
    write_file(dir / "fits.csv", csv);

    std::string pts = "label,abscissa,w1,stderr\r\n";
    for (const auto& f : result.fits)
      for (const auto& p : f.points)
        pts += f.label + "," + num(p.abscissa) + "," + num(p.w1) + "," +
               num(p.stderr_) + "\r\n";
    write_file(dir / "fit_points.csv", pts);
  }
  write_file(dir / "plot_rates.py", kPlotScript);
}

}  // namespace stablesde
