from . import (
    util,
    data,
    dynamics,
)
