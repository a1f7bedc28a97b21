# Configuration file for the Sphinx documentation builder.
#
# This file only contains a selection of the most common options. For a full
# list see the documentation:
# http://www.sphinx-doc.org/en/master/config

# -- Path setup --------------------------------------------------------------

# If extensions (or modules to document with autodoc) are in another directory,
# add these directories to sys.path here. If the directory is relative to the
# documentation root, use os.path.abspath to make it absolute, like shown here.
#
import datetime
import os
import sys

sys.path.insert(0, os.path.abspath("../.."))

extensions = []

# -- Project information -----------------------------------------------------

project = "spsro"
year = datetime.datetime.now().strftime("%Y")
author = "The spsro developers"
copyright = f"{year}, {author}"


import spsro.version  # noqa

version = ".".join(spsro.version.__VERSION__.split(".")[:3])
release = spsro.version.__VERSION__

# -- General configuration ---------------------------------------------------

master_doc = "index"

# -- Options for HTML output -------------------------------------------------

html_theme = "piccolo_theme"
html_short_title = "spsro"
html_theme_options = {}

# -- Autodoc -----------------------------------------------------------------

extensions += ["sphinx.ext.autodoc"]
autodoc_typehints = "signature"
autodoc_typehints_format = "short"
autoclass_content = "both"
autodoc_preserve_defaults = True

# -- Viewcode -------------------------------------------------------------

extensions += ["sphinx.ext.viewcode"]

# -- Intersphinx -------------------------------------------------------------

extensions += ["sphinx.ext.intersphinx"]
intersphinx_mapping = {
    "python": ("https://docs.python.org/3", None),
    "numpy": ("https://numpy.org/doc/stable/", None),
}

# -- Markdown ----------------------------------------------------------------

extensions += ["myst_parser"]
