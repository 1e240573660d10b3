# -*- coding: utf-8 -*-
"""
Plotting style dictionaries for training curves and budget plots, and the
figure outlines they get drawn on.
"""
import matplotlib
import matplotlib.pyplot as plt

style_train = {'color': 'b', 'linestyle': '-', 'linewidth': 2,
               'marker': None, 'label': 'train'}
style_val = {'color': 'orangered', 'linestyle': '--', 'linewidth': 2,
             'marker': 'o', 'markersize': 4, 'label': 'val'}
style_lr = {'color': 'k', 'linestyle': ':', 'linewidth': 1,
            'label': 'learning rate'}
style_published = {'color': 'k', 'marker': 'x', 'markersize': 7,
                   'linestyle': 'none', 'label': 'published'}

# one marker style per network family
style_family = {
    'resnet': {'color': 'black', 'marker': 'D', 'markersize': 7,
               'fillstyle': 'full', 'linestyle': 'none'},
    'rphm': {'color': 'grey', 'marker': 'd', 'markersize': 7,
             'fillstyle': 'none', 'linestyle': 'none'},
    'quat': {'color': 'blue', 'marker': 's', 'markersize': 6,
             'fillstyle': 'full', 'linestyle': 'none'},
    'qphm': {'color': 'indigo', 'marker': 's', 'markersize': 6,
             'fillstyle': 'none', 'linestyle': 'none'},
    'vect': {'color': 'green', 'marker': '^', 'markersize': 7,
             'fillstyle': 'full', 'linestyle': 'none'},
    'vphm': {'color': 'darkgoldenrod', 'marker': '^', 'markersize': 7,
             'fillstyle': 'none', 'linestyle': 'none'},
    }


def family_style(arch):
    """Marker style of a preset name such as 'qphm18'"""
    for family, style in style_family.items():
        if arch.startswith(family):
            return dict(style, label=arch)
    return {'marker': 'o', 'linestyle': 'none', 'label': arch}


def use_headless_backend():
    """Switch to Agg when no display is around (tests, servers)"""
    if matplotlib.get_backend().lower() not in ('agg', 'pdf', 'svg'):
        plt.switch_backend('Agg')


def plot_history_outline(figsize=(8, 3.5), title=None):
    """
    Two side by side axes for loss and top-1 accuracy against epoch.
    Returns the figure and both axis handles.
    """
    fig, (ax_loss, ax_top1) = plt.subplots(nrows=1, ncols=2, figsize=figsize)
    ax_loss.set_xlabel('epoch')
    ax_loss.set_ylabel('cross-entropy loss')
    ax_top1.set_xlabel('epoch')
    ax_top1.set_ylabel('top-1 accuracy (%)')
    ax_top1.set_ylim(0, 100)
    for ax in (ax_loss, ax_top1):
        ax.grid()
    if title is not None:
        fig.suptitle(title)
    fig.tight_layout()
    return fig, ax_loss, ax_top1


def plot_budget_outline(figsize=(5, 4), figaxis=None):
    """Parameters (millions) against multiply-accumulates (billions)"""
    if figaxis is None:
        fig, ax = plt.subplots(figsize=figsize)
    else:
        fig, ax = figaxis.figure, figaxis
    ax.set_xlabel('MACs per image (G)')
    ax.set_ylabel('parameters (M)')
    ax.grid()
    return fig, ax
