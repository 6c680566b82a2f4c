# Sphinx configuration for the hicontrast documentation.
#
# See https://www.sphinx-doc.org/en/master/usage/configuration.html

import hicontrast

project = "hicontrast"

# Full version from setuptools_scm, and X.Y for the page titles.
release = hicontrast.__version__
version = ".".join(release.split(".")[:2])

extensions = [
    "sphinx.ext.autodoc",
    "sphinx.ext.intersphinx",
    "sphinx.ext.viewcode",
    "sphinx_copybutton",
    "sphinx_design",
]

# Docstrings name arrays and matrices informally.
nitpicky = False

autoclass_content = "both"
autodoc_member_order = "bysource"
autodoc_inherit_docstrings = False

# `name` links to whatever Python object it resolves to.
default_role = "any"

source_suffix = ".rst"
master_doc = "index"
exclude_patterns = ["_build"]
pygments_style = "sphinx"

intersphinx_mapping = dict(
    python=("https://docs.python.org/3/", None),
    numpy=("https://numpy.org/doc/stable/", None),
    scipy=("https://docs.scipy.org/doc/scipy/", None),
)

# Copy buttons skip shell and interpreter prompts.
copybutton_prompt_text = r">>> |\.\.\. |\$ "
copybutton_prompt_is_regexp = True

html_theme = "pydata_sphinx_theme"
html_theme_options = dict(
    logo=dict(text=project),
    navbar_end=["theme-switcher"],
)
html_show_sphinx = False
html_show_copyright = False
