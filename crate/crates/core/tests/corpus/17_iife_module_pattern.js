var Module = (function () {
  var privateState = 0;
  function increment() { privateState++; }
  function read() { return privateState; }
  return {
    increment: increment,
    read: read,
    reset: function () { privateState = 0; }
  };
})();
!function () { Module.increment(); }();
