"""The reverse-mode tensor engine, checked against finite differences."""
import numpy as np

from wavelink.neural import Tensor
from wavelink.neural.gradcheck import check_gradients, numeric_grad
from wavelink.neural.nets import conv2d

rng = np.random.default_rng(0)

# a scalar pipeline by hand
x = Tensor(np.array([0.3, -1.2, 0.7]), requires_grad=True)
y = ((x * 2.0).tanh() ** 2).sum()
y.backward()
print("analytic dy/dx :", np.round(x.grad, 6))

fd = numeric_grad(lambda: ((x * 2.0).tanh() ** 2).sum(), x, [0, 1, 2])
print("numeric  dy/dx :", np.round(fd, 6))

# a convolution layer end to end (channels last)
img = Tensor(rng.standard_normal((2, 8, 5, 4)), requires_grad=True)
w = Tensor(0.3 * rng.standard_normal((3, 3, 4, 6)), requires_grad=True)
b = Tensor(np.zeros(6), requires_grad=True)

def loss():
    return (conv2d(img, w, b, dilation=(1, 2)).relu() ** 2).mean()

err = check_gradients(loss, {"img": img, "w": w, "b": b}, rng,
                      samples_per_tensor=6)
print("conv2d worst finite-difference rel err: %.2e" % err)
