import numpy as np

from xadv.image import ImageBuffer


def random_image(rng, h=16, w=16):
    return ImageBuffer(rng.uniform(size=(h, w, 3)), copy=False)
