import os

os.system("touch isoscope_hostile_05 && cp isoscope_hostile_05 ..")
