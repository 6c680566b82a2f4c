# Python package for scripts packaged with hicontrast.
