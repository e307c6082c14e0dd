# Third-party
import numpy as np

__all__ = ["plot_beam_patterns", "plot_stratified_accuracy", "plot_topk_comparison"]


def _get_ax(ax):
    if ax is None:
        import matplotlib.pyplot as plt

        ax = plt.gca()
    return ax


def plot_topk_comparison(reports, ax=None, bar_kwargs=dict(), add_labels=True):
    """
    Grouped bar chart of the top-k accuracy of several feature sets.

    Parameters
    ----------
    reports : dict
        Feature set name to `~skybeam.evaluation.EvalReport`.
    ax : `~matplotlib.Axes`, optional
        A matplotlib axes object to plot on to. If not specified, will
        use the current axes.
    bar_kwargs : dict, optional
        Passed to `matplotlib.pyplot.bar()`.
    add_labels : bool, optional

    Returns
    -------
    fig : `~matplotlib.Figure`
    """
    ax = _get_ax(ax)

    if len(reports) == 0:
        msg = "No reports to plot"
        raise ValueError(msg)

    ks = sorted({int(k) for r in reports.values() for k in r.topk})
    names = list(reports)
    width = 0.8 / len(names)
    x = np.arange(len(ks))

    for i, name in enumerate(names):
        accs = [reports[name].topk.get(k, np.nan) for k in ks]
        style = bar_kwargs.copy()
        style.setdefault("label", name)
        ax.bar(x + (i - (len(names) - 1) / 2) * width, accs, width, **style)

    ax.set_xticks(x)
    ax.set_xticklabels([f"top-{k}" for k in ks])
    ax.set_ylim(0, 1)
    if add_labels:
        ax.set_ylabel("accuracy")
        ax.legend(loc="lower right")

    return ax.figure


def plot_stratified_accuracy(report, dimension, k=1, ax=None, add_labels=True):
    """
    Top-k accuracy per stratum of one report.

    Parameters
    ----------
    report : `~skybeam.evaluation.EvalReport`
    dimension : str
        E.g., ``"height"`` or ``"speed"``.
    k : int, optional
    ax : `~matplotlib.Axes`, optional
    add_labels : bool, optional

    Returns
    -------
    fig : `~matplotlib.Figure`
    """
    ax = _get_ax(ax)

    if dimension not in report.strata:
        msg = f"The report has no '{dimension}' strata"
        raise ValueError(msg)

    strata = report.strata[dimension]
    names = list(strata)
    accs = [np.nan if strata[b]["topk"].get(k) is None else strata[b]["topk"][k] for b in names]
    bars = ax.bar(np.arange(len(names)), accs, 0.6, color="#555555")

    for bar, b in zip(bars, names):
        ax.annotate(
            f"n={strata[b]['count']}",
            (bar.get_x() + bar.get_width() / 2, 0.02),
            ha="center",
            color="w",
        )

    ax.set_xticks(np.arange(len(names)))
    ax.set_xticklabels(names)
    ax.set_ylim(0, 1)
    if add_labels:
        ax.set_xlabel(dimension)
        ax.set_ylabel(f"top-{k} accuracy")

    return ax.figure


def plot_beam_patterns(codebook, n_grid=1024, beams=None, ax=None, plot_kwargs=dict()):
    """
    Array gain of codebook beams as a function of the direction sine.

    Parameters
    ----------
    codebook : `~skybeam.codebook.BeamCodebook`
    n_grid : int, optional
    beams : iterable of int, optional
        Beam indices to plot. Default is every beam.
    ax : `~matplotlib.Axes`, optional
    plot_kwargs : dict, optional
        Passed to `matplotlib.pyplot.plot()`.

    Returns
    -------
    fig : `~matplotlib.Figure`
    """
    ax = _get_ax(ax)

    sines = np.linspace(-1, 1, n_grid)
    gains = codebook.array_response(sines)
    if beams is None:
        beams = range(codebook.num_beams)

    style = plot_kwargs.copy()
    style.setdefault("linewidth", 0.75)
    style.setdefault("marker", "")
    for q in beams:
        ax.plot(sines, gains[:, q], **style)

    ax.set_xlim(-1, 1)
    ax.set_xlabel("direction sine")
    ax.set_ylabel("array gain")
    return ax.figure
