from .activation import *
from .builders import *
from .domain import *
from .errors import *
from .features import *
from .kst import *
from .network import *
from .targets import *
from .univariate import *

# Path: src\core\__init__.py
