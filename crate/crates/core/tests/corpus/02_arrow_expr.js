var g = () => 1
