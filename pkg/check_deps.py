import flask
import flask_socketio
import numpy
import scipy
import PIL
import dotenv

for module in (numpy, scipy, PIL, flask, flask_socketio):
    print(f"{module.__name__} {getattr(module, '__version__', 'unknown')}")
print("Dependencies OK")
