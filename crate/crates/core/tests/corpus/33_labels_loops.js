function search(grid, value) {
  outer: for (var i = 0; i < grid.length; i++) {
    for (var j = 0; j < grid[i].length; j++) {
      if (grid[i][j] === value) break outer;
    }
  }
  return [i, j];
}
do { var once = (function () { return 1; })(); } while (false);
