var anon = function () { return 42; };
var named = function inner(n) { return n <= 1 ? 1 : n * inner(n - 1); };
setTimeout(function () { console.log("tick"); }, 0);
(function iife() {
  var hidden = 1;
  return hidden;
})();
