/* leading block comment function nope() {} */
function commented(/* inline */ a, b /* trailing */) {
  // function insideComment() {}
  return a /* mid */ + b;
}
var c = /* before */ function /* between */ () /* after */ { return 0; };
