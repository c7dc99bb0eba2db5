function withDefaults(a = () => 1, { b = function () { return 2; } } = {}, ...rest) {
  return a() + b() + rest.length;
}
const arrowDefaults = (x = y => y) => x(3);
