import numpy as np
import pytest

from hierfusion.hierarchy import parse_hierarchy

TINY_TREE = """\
food\tROOT\t1
nightlife\tROOT\t1
pizza\tfood\t2
sushi\tfood\t2
bar\tnightlife\t2
club\tnightlife\t2
"""

# Mixed-depth tree: some leaves on layer 2, some on layer 3.
THREE_LAYER_TREE = """\
food\tROOT\t1
nightlife\tROOT\t1
outdoors\tROOT\t1
restaurant\tfood\t2
cafe\tfood\t2
bar\tnightlife\t2
club\tnightlife\t2
park\toutdoors\t2
pizza\trestaurant\t3
sushi\trestaurant\t3
steak\trestaurant\t3
espresso\tcafe\t3
"""


@pytest.fixture
def tiny_tree():
    return parse_hierarchy(TINY_TREE)


@pytest.fixture
def three_layer_tree():
    return parse_hierarchy(THREE_LAYER_TREE)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
