"""Tour of the tensor core: building graphs, backward, and gradient checking.

Run: python3 demos/01_autodiff_basics.py
"""

import numpy as np

from groupvq import ndgrad as ng

# Tensors wrap float32 arrays. Only leaves created with requires_grad=True
# accumulate gradients.
x = ng.parameter(np.array([[1.0, -2.0], [0.5, 3.0]], dtype=np.float32))
w = ng.parameter(np.array([[0.2], [-0.4]], dtype=np.float32))

y = ng.matmul(x, w)          # (2, 1)
act = ng.leaky_relu(y)       # slope 0.2 below zero
loss = ng.reduce_mean(ng.square(act))

print("forward value:", loss.item())

loss.backward()
print("dL/dx:\n", x.grad)
print("dL/dw:\n", w.grad)

# Gradients accumulate across fan-out: y = x + x doubles the upstream signal.
a = ng.parameter(np.ones(3, dtype=np.float32))
ng.reduce_sum(ng.add(a, a)).backward()
print("fan-out gradient (expect all 2):", a.grad)

# grad_check compares the analytic gradient against central differences and
# returns the worst relative error. Values well below 1e-3 mean the vjp rules
# and the graph bookkeeping agree with the numbers.
def f(v):
    return ng.reduce_mean(ng.square(ng.tanh(ng.matmul(v, ng.constant(np.eye(2, dtype=np.float32))))))

probe = ng.Tensor(np.random.default_rng(0).normal(size=(4, 2)).astype(np.float32))
print("grad_check max relative error:", ng.grad_check(f, probe, step=1e-3))
