
use crate::config::{ScenarioConfig, SystemKind};
use crate::output::{time_tag, OutputDir};

const FIELDS_SCRIPT: &str = r##"import sys
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

HERE = Path(__file__).resolve().parent
TAGS = {tags}


def load(name):
    return np.genfromtxt(HERE / name, delimiter=",", names=True, skip_header=1)


def main():
    for tag in TAGS:
        f = load(f"fields_{tag}.csv")
        keep = f["mask"] == 0
        fig, axes = plt.subplots(2, 2, figsize=(10, 7), sharex=True)
        for ax, col in zip(axes.flat, ["rho", "v", "var_u", "qp_term"]):
            ax.plot(f["x"], np.where(keep, f[col], np.nan))
            ax.set_ylabel(col)
        for ax in axes[1]:
            ax.set_xlabel("x")
        fig.suptitle(f"fields {tag}")
        fig.tight_layout()
        fig.savefig(HERE / f"fields_{tag}.png", dpi=120)
        plt.close(fig)

        fig, ax = plt.subplots(figsize=(7, 4))
        for kind in ["continuity", "momentum", "identity"]:
            path = HERE / f"residual_{kind}_{tag}.csv"
            if path.exists():
                r = load(path.name)
                ax.plot(r["x"], r["residual"], label=kind)
                if np.isfinite(r["stat_error"]).any():
                    ax.fill_between(r["x"], -3 * r["stat_error"], 3 * r["stat_error"], alpha=0.2)
        ax.set_xlabel("x")
        ax.set_ylabel("residual")
        ax.legend()
        fig.tight_layout()
        fig.savefig(HERE / f"residuals_{tag}.png", dpi=120)
        plt.close(fig)


if __name__ == "__main__":
    sys.exit(main())
"##;

const COVARIANCE_SCRIPT: &str = r##"from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

HERE = Path(__file__).resolve().parent


def main():
    c = np.genfromtxt(HERE / "covariance.csv", delimiter=",", names=True, skip_header=1)
    c = np.atleast_1d(c)
    fig, ax = plt.subplots(figsize=(7, 4))
    for col in c.dtype.names[1:]:
        ax.plot(c["t"], c[col], "o-", label=col)
    window = HERE / "d2_window.csv"
    if window.exists():
        w = np.genfromtxt(window, delimiter=",", names=True, skip_header=1)
        ax.plot(w["t"], w["d2"], "k--", lw=0.8, label="d2 scan")
    ax.set_xlabel("t")
    ax.set_yscale("symlog")
    ax.legend()
    fig.tight_layout()
    fig.savefig(HERE / "covariance.png", dpi=120)


if __name__ == "__main__":
    main()
"##;

fn tags(config: &ScenarioConfig) -> String {
    if config.system == SystemKind::Magnetic {
        return "[]".into();
    }
    let quoted: Vec<String> = config.numerics.t_grid.iter().map(|&t| format!("\"{}\"", time_tag(t))).collect();
    format!("[{}]", quoted.join(", "))
}

pub fn write_analytic_scripts(out: &mut OutputDir, config: &ScenarioConfig) -> std::io::Result<()> {
    let fields = FIELDS_SCRIPT.replace("{tags}", &tags(config));
    out.text("plot_fields.py", |w| w.write_all(fields.as_bytes()))?;
    out.text("plot_covariance.py", |w| w.write_all(COVARIANCE_SCRIPT.as_bytes()))
}

pub fn write_simulation_scripts(out: &mut OutputDir, config: &ScenarioConfig) -> std::io::Result<()> {
    let fields = FIELDS_SCRIPT.replace("{tags}", &tags(config));
    out.text("plot_fields.py", |w| w.write_all(fields.as_bytes()))
}
