with open("/tmp/isoscope_hostile_03.txt", "w") as f:
    f.write("escaped")
