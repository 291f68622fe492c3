import os

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import plotly.graph_objects as go  # noqa: E402


def _step_series(trace):
    """x/y arrays of a trace: profile index held constant between steps."""
    steps = list(range(len(trace.profiles)))
    return steps, list(trace.profiles)


def save_profile_dynamics_svg(traces, path, title="Profile Dynamics", n_profiles=None):
    """
    Save a step plot of profile index vs step, one line per run.

    Args:
        traces (list[Trace]): Runs to draw.
        path (str): Output SVG path.
        title (str): Plot title.
        n_profiles (int, optional): Upper limit of the y-axis (number of profiles).

    Returns:
        str: The written path.
    """
    fig, ax = plt.subplots(figsize=(7, 4))
    for trace in traces:
        x, y = _step_series(trace)
        ax.step(x, y, where="post", marker="o", markersize=3, label=f"start {trace.start}")

    ax.set_xlabel("Step")
    ax.set_ylabel("Profile index")
    ax.set_title(title)
    if n_profiles is not None:
        ax.set_ylim(0.5, n_profiles + 0.5)
    ax.grid(True, color="#e5e5e5")
    if 0 < len(traces) <= 12:
        ax.legend(loc="upper right", fontsize=8)

    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    fig.savefig(path, format="svg", bbox_inches="tight")
    plt.close(fig)
    return path


def plot_profile_dynamics(traces, title="Profile Dynamics", output_dir="results"):
    """
    Interactive version of the profile-dynamics plot.

    - One step line per run (profile index vs step).
    - Absorbing profiles are marked.
    - Saves the plot as an HTML file in the specified output directory.

    Args:
        traces (list[Trace]): Runs to draw.
        title (str): Title of the plot and output filename.
        output_dir (str): Directory to save the plot HTML file (default: "results").

    Returns:
        plotly.graph_objects.Figure: The generated interactive figure.
    """
    fig = go.Figure()

    for trace in traces:
        x, y = _step_series(trace)
        fig.add_trace(
            go.Scatter(
                x=x,
                y=y,
                mode="lines+markers",
                line=dict(shape="hv", width=2),
                name=f"start {trace.start}",
                hovertemplate="step %{x}<br>profile %{y}",
            )
        )
        if trace.converged:
            fig.add_trace(
                go.Scatter(
                    x=[x[-1]],
                    y=[trace.absorbing],
                    mode="markers",
                    marker=dict(color="red", size=10, symbol="star"),
                    showlegend=False,
                    hovertemplate=f"absorbed at {trace.absorbing}",
                )
            )

    fig.update_layout(
        title=dict(text=title, x=0.5, xanchor="center", font=dict(size=18, color="black")),
        xaxis=dict(
            title="Step",
            linecolor="black",
            tickfont=dict(color="black"),
            showgrid=True,
            gridcolor="#eee",
        ),
        yaxis=dict(
            title="Profile index",
            linecolor="black",
            tickfont=dict(color="black"),
            showgrid=True,
            gridcolor="#eee",
        ),
        plot_bgcolor="white",
        paper_bgcolor="white",
        height=500,
        margin=dict(l=50, r=50, t=50, b=50),
    )

    os.makedirs(output_dir, exist_ok=True)
    filename = os.path.join(output_dir, f"{title.replace(' ', '_')}.html")
    fig.write_html(filename)
    return fig
