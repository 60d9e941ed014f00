"""Figure rendering for run outputs.

The CSVs are the contract; these plots are a convenience layer derived from
the same recorded trace: the regulated-error components of every agent, and
the tracked output of every agent against the reference it should follow.
Rendering uses the Agg backend so runs stay headless.
"""

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402


def render_figures(trace, scenario, outdir):
    """Write errors.png and tracking.png under ``outdir``.

    Returns the list of written paths.  The tracking figure plots the
    regulated output combination Ce x + De u per agent together with the
    reference -Fe upsilon it converges to."""
    paths = []
    t = trace.times
    n = len(trace.e)

    fig, ax = plt.subplots(figsize=(7.0, 4.2))
    for i in range(n):
        mags = trace.e[i]
        for comp in range(mags.shape[1]):
            label = f"agent {i}" if comp == 0 else None
            ax.plot(t, mags[:, comp], label=label, linewidth=1.2)
    ax.axhline(0.0, color="k", linewidth=0.6, alpha=0.5)
    ax.set_xlabel("time [s]")
    ax.set_ylabel("regulated error")
    ax.set_title(f"{scenario.name}: regulated errors")
    ax.grid(alpha=0.3)
    ax.legend(ncol=3, fontsize=8)
    fig.tight_layout()
    path = outdir / "errors.png"
    fig.savefig(path, dpi=130)
    plt.close(fig)
    paths.append(path)

    fig, ax = plt.subplots(figsize=(7.0, 4.2))
    for i, model in enumerate(scenario.agents):
        tracked = trace.x[i] @ model.Ce.T + trace.u[i] @ model.De.T
        for comp in range(tracked.shape[1]):
            label = f"agent {i}" if comp == 0 else None
            ax.plot(t, tracked[:, comp], label=label, linewidth=1.2)
    reference = -(trace.upsilon @ scenario.agents[0].Fe.T)
    for comp in range(reference.shape[1]):
        label = "reference" if comp == 0 else None
        ax.plot(t, reference[:, comp], "k--", label=label, linewidth=1.4)
    ax.set_xlabel("time [s]")
    ax.set_ylabel("tracked output")
    ax.set_title(f"{scenario.name}: outputs vs reference")
    ax.grid(alpha=0.3)
    ax.legend(ncol=3, fontsize=8)
    fig.tight_layout()
    path = outdir / "tracking.png"
    fig.savefig(path, dpi=130)
    plt.close(fig)
    paths.append(path)

    return paths
